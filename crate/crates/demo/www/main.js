import init, { Demo } from "./pkg/paretoflow_demo.js";

const $ = (id) => document.getElementById(id);
let demo = null;
let front = [];
let selected = new Set();
let busy = false;

function heat(canvas, values, side, marks) {
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / side;
  const max = Math.max(...values, 1e-12);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let a = 0; a < side; a++) {
    for (let b = 0; b < side; b++) {
      const v = values[a * side + b] / max;
      const shade = Math.round(255 * (1 - v));
      ctx.fillStyle = `rgb(${shade},${shade},255)`;
      // a runs left to right, b bottom to top
      ctx.fillRect(a * cell, (side - 1 - b) * cell, cell, cell);
    }
  }
  if (!marks) return;
  for (const [i, style] of marks) {
    const a = Math.floor(i / side), b = i % side;
    ctx.strokeStyle = style;
    ctx.lineWidth = 2;
    ctx.strokeRect(a * cell + 1, (side - 1 - b) * cell + 1, cell - 2, cell - 2);
  }
}

function weight() {
  return Number($("w1").value);
}

function drawDistributions() {
  const side = demo.side();
  $("w1-out").textContent = weight().toFixed(2);
  try {
    heat($("target"), demo.target(weight(), Number($("exp").value)), side);
  } catch (e) {
    $("status").textContent = String(e);
  }
  heat($("policy"), demo.policy(weight()), side);
  $("l1").textContent = demo.l1(weight()).toFixed(3);
}

function drawFront() {
  const side = demo.side();
  const ys = demo.objectives();
  const onFront = new Set(front);
  const fill = new Array(side * side).fill(0);
  for (const i of selected) fill[i] = 1;
  heat($("cells"), fill, side, front.map((i) => [i, "#d33"]));

  const c = $("space"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  for (let i = 0; i < side * side; i++) {
    const x = ys[2 * i] * (c.width - 8) + 4;
    const y = c.height - 4 - ys[2 * i + 1] * (c.height - 8);
    ctx.fillStyle = selected.has(i) ? "#06c" : onFront.has(i) ? "#d33" : "#bbb";
    ctx.fillRect(x - 2, y - 2, 4, 4);
  }
  $("front-size").textContent = front.length;
  $("hv-front").textContent = demo.hypervolume_of(Uint32Array.from(front)).toFixed(4);
  $("hv-sel").textContent = demo.hypervolume_of(Uint32Array.from(selected)).toFixed(4);
}

function rebuild() {
  try {
    demo = new Demo(Number($("side").value), BigInt($("seed").value));
  } catch (e) {
    $("status").textContent = String(e);
    return;
  }
  $("status").textContent = "";
  $("side-label").textContent = `${demo.side()} x ${demo.side()}`;
  front = Array.from(demo.front());
  selected = new Set();
  $("steps").textContent = "0";
  $("loss").textContent = "-";
  drawDistributions();
  drawFront();
}

// Train in small chunks so the page stays responsive.
function train(remaining) {
  if (remaining <= 0) {
    busy = false;
    return;
  }
  const chunk = Math.min(25, remaining);
  const loss = demo.train(chunk);
  $("steps").textContent = demo.steps();
  $("loss").textContent = loss.toFixed(4);
  drawDistributions();
  requestAnimationFrame(() => train(remaining - chunk));
}

await init();
$("reset").onclick = rebuild;
$("w1").oninput = drawDistributions;
$("exp").onchange = drawDistributions;
$("clear").onclick = () => { selected = new Set(); drawFront(); };
$("cells").onclick = (ev) => {
  const side = demo.side();
  const r = ev.target.getBoundingClientRect();
  const a = Math.floor((ev.clientX - r.left) / (r.width / side));
  const b = side - 1 - Math.floor((ev.clientY - r.top) / (r.height / side));
  const i = a * side + b;
  if (selected.has(i)) selected.delete(i); else selected.add(i);
  drawFront();
};
$("train").onclick = () => {
  if (busy) return;
  busy = true;
  train(500);
};
rebuild();
