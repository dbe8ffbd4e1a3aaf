import init, { train_demo, fis_demo, theory_demo } from "./pkg/sian_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function run(out, f) {
  try {
    return f();
  } catch (e) {
    out.textContent = String(e);
    out.className = "err";
    return null;
  }
}

function range(values) {
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  return hi > lo ? [lo, hi] : [lo - 1, hi + 1];
}

function curve(shape) {
  const c = document.createElement("canvas");
  c.width = 220; c.height = 160;
  const g = c.getContext("2d");
  const xs = shape.axes[0], ys = shape.values;
  const [lo, hi] = range(ys);
  const px = (i) => 10 + (200 * i) / (xs.length - 1);
  const py = (v) => 150 - (140 * (v - lo)) / (hi - lo);
  g.strokeStyle = "#ccc";
  g.beginPath(); g.moveTo(10, py(0)); g.lineTo(210, py(0)); g.stroke();
  g.strokeStyle = "#1f5fa8"; g.lineWidth = 2;
  g.beginPath();
  ys.forEach((v, i) => (i ? g.lineTo(px(i), py(v)) : g.moveTo(px(i), py(v))));
  g.stroke();
  return c;
}

function heatmap(shape) {
  const c = document.createElement("canvas");
  c.width = 160; c.height = 160;
  const g = c.getContext("2d");
  const [nx, ny] = [shape.axes[0].length, shape.axes[1].length];
  const [lo, hi] = range(shape.values);
  const m = Math.max(Math.abs(lo), Math.abs(hi));
  const w = c.width / nx, h = c.height / ny;
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      const t = shape.values[i * ny + j] / m;
      const r = t > 0 ? 255 : Math.round(255 * (1 + t));
      const b = t < 0 ? 255 : Math.round(255 * (1 - t));
      const gr = Math.round(255 * (1 - Math.abs(t)));
      g.fillStyle = `rgb(${r},${gr},${b})`;
      g.fillRect(i * w, c.height - (j + 1) * h, w + 1, h + 1);
    }
  }
  return c;
}

function train() {
  const out = $("train-out");
  out.className = "";
  out.textContent = "Training…";
  setTimeout(() => {
    const t0 = performance.now();
    const res = run(out, () => JSON.parse(train_demo(BigInt(num("train-seed")), num("order"), num("epochs"))));
    if (!res) return;
    const ms = Math.round(performance.now() - t0);
    out.textContent = `test MSE ${res.test_mse.toFixed(4)} (predicting the mean: ${res.baseline_mse.toFixed(4)}), ${ms} ms`;
    const box = $("shapes");
    box.replaceChildren();
    for (const s of res.shapes) {
      const div = document.createElement("div");
      div.className = "shape";
      div.append(s.indices.length === 1 ? curve(s) : heatmap(s));
      div.append(document.createElement("br"), "{" + s.indices.map((i) => "x" + i).join(", ") + "}");
      box.append(div);
    }
  }, 10);
}

function select() {
  const out = $("fis-out");
  out.className = "";
  const res = run(out, () =>
    JSON.parse(fis_demo(BigInt(num("fis-seed")), num("theta"), num("tau"), num("max-order"))));
  if (!res) return;
  out.textContent = "Selected: " + res.family.map((s) => "{" + s.join(",") + "}").join(" ");
  const rows = [["set", "score", "kept"]].concat(
    res.scores.map((s) => ["{" + s.indices.join(",") + "}", s.score.toExponential(3), s.selected ? "yes" : ""]));
  $("scores").replaceChildren(...rows.map((r, i) => {
    const tr = document.createElement("tr");
    if (i > 0 && res.scores[i - 1].selected) tr.className = "on";
    for (const v of r) {
      const cell = document.createElement(i ? "td" : "th");
      cell.textContent = v;
      tr.append(cell);
    }
    return tr;
  }));
}

function theory() {
  const c = $("spectrum");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const shares = run($("status"), () => JSON.parse(theory_demo(num("dim"), num("smooth"))));
  if (!shares) return;
  const top = Math.max(...shares);
  const w = (c.width - 40) / shares.length;
  g.font = "11px sans-serif";
  shares.forEach((s, k) => {
    const h = ((c.height - 40) * s) / top;
    g.fillStyle = "#1f5fa8";
    g.fillRect(30 + k * w + 2, c.height - 20 - h, w - 4, h);
    g.fillStyle = "#222";
    g.fillText(String(k), 30 + k * w + w / 2 - 3, c.height - 6);
    if (w > 28) g.fillText(s.toFixed(3), 30 + k * w + 2, c.height - 24 - h);
  });
}

await init();
$("status").textContent = "Ready.";
$("train").onclick = train;
$("fis").onclick = select;
$("theory").onclick = theory;
theory();
select();
