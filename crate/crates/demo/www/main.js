import init, { irisDemo, earDemo, smoothingCurve } from "./pkg/ocugaze_demo.js";

const $ = (id) => document.getElementById(id);

function bindSliders(ids, render) {
  for (const id of ids) {
    const input = $(id);
    const output = input.parentElement.querySelector("output");
    const update = () => {
      output.textContent = input.value;
      render();
    };
    input.addEventListener("input", update);
    output.textContent = input.value;
  }
  render();
}

function drawRaster(canvas, raster) {
  const off = new OffscreenCanvas(raster.width, raster.height);
  const ctx = off.getContext("2d");
  const image = ctx.createImageData(raster.width, raster.height);
  raster.pixels.forEach((v, i) => {
    image.data.set([v, v, v, 255], i * 4);
  });
  ctx.putImageData(image, 0, 0);
  const target = canvas.getContext("2d");
  target.imageSmoothingEnabled = false;
  target.drawImage(off, 0, 0, canvas.width, canvas.height);
  return canvas.width / raster.width;
}

function cross(ctx, x, y, size, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x - size, y);
  ctx.lineTo(x + size, y);
  ctx.moveTo(x, y - size);
  ctx.lineTo(x, y + size);
  ctx.stroke();
}

function renderIris() {
  const x = +$("iris-x").value, y = +$("iris-y").value, r = +$("iris-r").value, b = +$("iris-b").value;
  const result = JSON.parse(irisDemo(x, y, r, b));
  if (result.error) {
    $("iris-readout").textContent = result.error;
    return;
  }
  const scale = drawRaster($("iris-crop"), result.crop);
  drawRaster($("iris-mask"), result.mask);
  const ctx = $("iris-crop").getContext("2d");
  ctx.strokeStyle = "#2c2";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(result.truth.x * scale, result.truth.y * scale, r * scale, 0, 2 * Math.PI);
  ctx.stroke();
  if (result.estimate) {
    cross(ctx, result.estimate.x * scale, result.estimate.y * scale, 10, "#e22");
  }
  $("iris-readout").textContent = result.estimate
    ? `estimate   (${result.estimate.x.toFixed(2)}, ${result.estimate.y.toFixed(2)})\n` +
      `error      ${result.error_px.toFixed(3)} px\n` +
      `threshold  ${result.threshold}\ncandidates ${result.candidates}`
    : `no iris: ${result.message}`;
}

function renderEar() {
  const a = +$("ear-a").value, b = +$("ear-b").value;
  const result = JSON.parse(earDemo(a, b));
  if (result.error) {
    $("ear-readout").textContent = result.error;
    return;
  }
  const scale = drawRaster($("ear-crop"), result.crop);
  const ctx = $("ear-crop").getContext("2d");
  if (result.landmarks) {
    const pts = result.landmarks.map((p) => [p.x * scale, p.y * scale]);
    ctx.strokeStyle = "#fa0";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    pts.forEach(([px, py], i) => (i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py)));
    ctx.closePath();
    ctx.stroke();
    for (const [px, py] of pts) cross(ctx, px, py, 5, "#e22");
  }
  $("ear-readout").textContent = result.measured != null
    ? `measured EAR  ${result.measured.toFixed(4)}\nellipse EAR   ${result.analytic.toFixed(4)}`
    : `no landmarks: ${result.message}`;
}

function renderSmoothing() {
  const p = +$("sm-p").value, m = +$("sm-m").value;
  const curve = JSON.parse(smoothingCurve(p, m, 3000, 7));
  const canvas = $("sm-plot");
  const ctx = canvas.getContext("2d");
  const pad = 32, w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.fillText("1.0", 4, pad + 4);
  ctx.fillText("0.0", 4, pad + h + 4);
  ctx.fillText("window", pad + w / 2 - 20, canvas.height - 8);
  const at = (i, acc) => [pad + (i / Math.max(1, curve.length - 1)) * w, pad + (1 - acc) * h];
  ctx.strokeStyle = "#26c";
  ctx.lineWidth = 2;
  ctx.beginPath();
  curve.forEach((pt, i) => {
    const [x, y] = at(i, pt.accuracy);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
  const last = curve[curve.length - 1];
  $("sm-readout").textContent =
    `window 1   ${curve[0].accuracy.toFixed(3)}\nwindow ${String(last.window).padEnd(3)} ${last.accuracy.toFixed(3)}`;
}

await init();
bindSliders(["iris-x", "iris-y", "iris-r", "iris-b"], renderIris);
bindSliders(["ear-a", "ear-b"], renderEar);
bindSliders(["sm-p", "sm-m"], renderSmoothing);
