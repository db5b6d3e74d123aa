// Build first: wasm-pack build crates/wasm-demo --target web --out-dir www/pkg
import init, { Scene } from "./pkg/explore_wasm_demo.js";

const canvas = document.getElementById("map");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
const $ = (id) => document.getElementById(id);
let scene = null;

const COLORS = ["#c8c8c8", "#ffffff", "#1f3b73"];

function cellSize() {
  return canvas.width / scene.side();
}

function drawCells(codes, palette) {
  const n = scene.side(), s = cellSize();
  for (let i = 0; i < codes.length; i++) {
    ctx.fillStyle = palette[codes[i]];
    ctx.fillRect((i % n) * s, Math.floor(i / n) * s, s, s);
  }
}

function drawNodes(highlight = []) {
  const xy = scene.nodes(), s = cellSize();
  for (let i = 0; i < xy.length / 2; i++) {
    ctx.fillStyle = i === 0 ? "#2a9d2a" : "#e08a00";
    ctx.beginPath();
    ctx.arc(xy[2 * i] * s, xy[2 * i + 1] * s, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  if (highlight.length > 1) {
    ctx.strokeStyle = "#d62828";
    ctx.lineWidth = 2;
    ctx.beginPath();
    highlight.forEach((v, k) => {
      const x = xy[2 * v] * s, y = xy[2 * v + 1] * s;
      k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}

function generate() {
  try {
    scene = new Scene($("family").value, Number($("seed").value), 40, 64, 20);
  } catch (e) {
    status.textContent = e.message;
    return;
  }
  drawCells(scene.cells(), ["#ffffff", "#333333"]);
  drawNodes();
  status.textContent = "world ready";
}

function run() {
  if (!scene) return;
  try {
    const ep = scene.runEpisode($("policy").value, Number($("travel").value), Number($("horizon").value), 7);
    drawCells(ep.evidence(), COLORS);
    const path = Array.from(ep.path());
    drawNodes(path);
    const c = ep.cumulative();
    const last = c.length ? c[c.length - 1] : 0;
    status.textContent = `visited ${path.length - 1} nodes, coverage ${(100 * last).toFixed(1)}%`;
  } catch (e) {
    status.textContent = e.message;
  }
}

canvas.addEventListener("click", (ev) => {
  if (!scene) return;
  const r = canvas.getBoundingClientRect(), s = cellSize();
  const x = (ev.clientX - r.left) / s, y = (ev.clientY - r.top) / s;
  try {
    drawCells(scene.scanAt(x, y), COLORS);
    drawNodes();
    status.textContent = `scan at (${x.toFixed(1)}, ${y.toFixed(1)})`;
  } catch (e) {
    status.textContent = e.message;
  }
});

$("generate").addEventListener("click", generate);
$("run").addEventListener("click", run);
await init();
generate();
