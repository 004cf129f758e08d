// Built by: wasm-bindgen --target web --out-dir crates/web/www/pkg <pgnlm_web.wasm>
import init, { Demo } from "./pkg/pgnlm_web.js";

const $ = (id) => document.getElementById(id);
let demo = null;

function status(msg) {
  $("status").textContent = msg || "";
}

function paint(canvas, rgba, side) {
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), side, side), 0, 0);
}

function show(layer) {
  const n = demo.size();
  paint($("c-" + layer), demo.layer_rgba(layer), n);
}

function slider(id) {
  const el = $(id);
  const out = el.parentElement.querySelector("span");
  const update = () => { out.textContent = el.value; };
  el.addEventListener("input", update);
  update();
  return () => Number(el.value);
}

const gamma = slider("gamma");
const lambda = slider("lambda");
const smax = slider("smax");
const ppol = slider("ppol");
const popt = slider("popt");
const half = slider("half");

function guarded(fn) {
  return () => {
    status("working...");
    // let the status repaint before the blocking call
    setTimeout(() => {
      try {
        fn();
        status("");
      } catch (e) {
        status(e.message || String(e));
      }
    }, 10);
  };
}

function refreshStats() {
  let s;
  try {
    s = JSON.parse(demo.stats_json());
  } catch {
    return;
  }
  const fmt = (v) => (typeof v === "number" ? v.toPrecision(4) : v);
  $("stats").innerHTML =
    "<tr><th></th><th>input</th><th>guided NL</th><th>boxcar</th></tr>" +
    `<tr><th>ENL (C11)</th><td>${fmt(s.enl_input)}</td><td>${fmt(s.enl_pgnlm)}</td><td>${fmt(s.enl_boxcar)}</td></tr>` +
    `<tr><th>matrix error</th><td>${fmt(s.error_input)}</td><td>${fmt(s.error_pgnlm)}</td><td>${fmt(s.error_boxcar)}</td></tr>` +
    `<tr><th>predictor fraction</th><td></td><td>${fmt(s.mean_fraction_used)}</td><td></td></tr>` +
    `<tr><th>thresholds</th><td></td><td>${fmt(s.t_pol)} / ${fmt(s.t_opt)}</td><td></td></tr>`;
}

function runPgnlm() {
  demo.set_params(gamma(), lambda(), smax(), ppol(), popt(), $("guided").checked);
  demo.run_pgnlm();
  show("pgnlm");
  refreshStats();
}

function runBoxcar() {
  demo.set_boxcar_half(half());
  demo.run_boxcar();
  show("boxcar");
  refreshStats();
}

function simulate() {
  if (demo) demo.free();
  demo = new Demo($("scene").value, Number($("size").value), BigInt($("seed").value));
  for (const layer of ["input", "guide", "truth"]) show(layer);
  runPgnlm();
  runBoxcar();
}

function pick(ev) {
  const canvas = $("c-pgnlm");
  const rect = canvas.getBoundingClientRect();
  const n = demo.size();
  const col = Math.min(n - 1, Math.floor(((ev.clientX - rect.left) / rect.width) * n));
  const row = Math.min(n - 1, Math.floor(((ev.clientY - rect.top) / rect.height) * n));
  paint($("weights"), demo.weight_map(row, col), demo.search_side());
  $("picked").textContent = `(${row}, ${col})`;
}

await init();
$("simulate").addEventListener("click", guarded(simulate));
$("run").addEventListener("click", guarded(runPgnlm));
$("boxcar").addEventListener("click", guarded(runBoxcar));
$("c-pgnlm").addEventListener("click", (ev) => guarded(() => pick(ev))());
guarded(simulate)();
