import init, { plantedProjection, fitCurve, alignmentDemo } from "./pkg/geoprobe_wasm.js";

const NS = "http://www.w3.org/2000/svg";
const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf"];

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function el(tag, attrs, parent) {
  const node = document.createElementNS(NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  parent.appendChild(node);
  return node;
}

/// Maps data coordinates onto the plot area with a margin.
function scaler(svg, xs, ys) {
  const w = svg.width.baseVal.value, h = svg.height.baseVal.value, m = 30;
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = x1 > x0 ? (w - 2 * m) / (x1 - x0) : 1;
  const sy = y1 > y0 ? (h - 2 * m) / (y1 - y0) : 1;
  return [(x) => m + (x - x0) * sx, (y) => h - m - (y - y0) * sy];
}

function report(id, fn) {
  const out = $(id);
  out.classList.remove("err");
  try {
    fn(out);
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function runProjection() {
  report("pp-out", (out) => {
    const r = JSON.parse(plantedProjection(num("pp-sentences"), num("pp-words"), num("pp-noise"), num("pp-epochs"), BigInt(num("pp-seed"))));
    out.textContent = `held-out Spearman ${r.spearman?.toFixed(3)}   UUAS ${r.uuas?.toFixed(3)}`;
    const svg = $("pp-plot");
    svg.replaceChildren();
    const [px, py] = scaler(svg, r.points.map((p) => p.x), r.points.map((p) => p.y));
    for (const [a, b] of r.gold) {
      const [p, q] = [r.points[a], r.points[b]];
      el("line", { x1: px(p.x), y1: py(p.y), x2: px(q.x), y2: py(q.y), stroke: "#ccc", "stroke-width": 5 }, svg);
    }
    for (const [a, b] of r.predicted) {
      const [p, q] = [r.points[a], r.points[b]];
      el("line", { x1: px(p.x), y1: py(p.y), x2: px(q.x), y2: py(q.y), stroke: PALETTE[p.sentence % PALETTE.length], "stroke-width": 1.5 }, svg);
    }
    for (const p of r.points) {
      const c = el("circle", { cx: px(p.x), cy: py(p.y), r: 4, fill: PALETTE[p.sentence % PALETTE.length] }, svg);
      el("title", {}, c).textContent = `sentence ${p.sentence}, word ${p.word + 1}`;
    }
  });
}

function runCurve() {
  report("em-out", (out) => {
    const rows = $("em-data").value.split("\n").map((l) => l.trim()).filter(Boolean).map((l) => l.split(",").map(Number));
    const words = new Float64Array(rows.map((r) => r[0]));
    const scores = new Float64Array(rows.map((r) => r[1]));
    const r = JSON.parse(fitCurve(words, scores, num("em-level")));
    const where = r.extrapolated ? " (outside the observed range)" : "";
    out.textContent = `floor ${r.a.toFixed(3)}  ceiling ${r.b.toFixed(3)}  midpoint 10^${r.mu.toFixed(2)} words  width ${r.sigma.toFixed(3)}\n` +
      `reaches level at 10^${r.emergence_log10.toFixed(2)} words${where}`;
    const svg = $("em-plot");
    svg.replaceChildren();
    const xs = [...rows.map((r) => Math.log10(r[0])), ...r.curve.map((c) => c[0])];
    const ys = [...rows.map((r) => r[1]), ...r.curve.map((c) => c[1])];
    const [px, py] = scaler(svg, xs, ys);
    el("polyline", { points: r.curve.map(([x, y]) => `${px(x)},${py(y)}`).join(" "), fill: "none", stroke: "#1f77b4", "stroke-width": 2 }, svg);
    for (const [w, s] of rows) el("circle", { cx: px(Math.log10(w)), cy: py(s), r: 4, fill: "#d62728" }, svg);
    const ex = px(r.emergence_log10);
    el("line", { x1: ex, x2: ex, y1: 10, y2: svg.height.baseVal.value - 10, stroke: "#999", "stroke-dasharray": "4 3" }, svg);
  });
}

function runAlignment() {
  report("al-out", (out) => {
    const r = JSON.parse(alignmentDemo(num("al-k"), num("al-p"), num("al-shared"), BigInt(num("al-seed"))));
    out.textContent = `alignment ${r.alignment.toFixed(6)}   shared/p ${r.expected.toFixed(6)}   random p/k ${r.random_baseline.toFixed(6)}`;
  });
}

await init();
$("pp-run").addEventListener("click", runProjection);
$("em-run").addEventListener("click", runCurve);
$("al-run").addEventListener("click", runAlignment);
runCurve();
runAlignment();
