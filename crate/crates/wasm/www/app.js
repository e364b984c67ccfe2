import init, { Schedule, Scene } from "./pkg/hud_wasm.js";

const $ = (id) => document.getElementById(id);
let schedule = null;
let scene = null;

function drawRgba(canvas, bytes, size) {
  canvas.width = size;
  canvas.height = size;
  const image = new ImageData(new Uint8ClampedArray(bytes.buffer, bytes.byteOffset, bytes.length), size, size);
  canvas.getContext("2d").putImageData(image, 0, 0);
}

function plot(canvas, series, yMax) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  for (const { values, color, dash } of series) {
    ctx.strokeStyle = color;
    ctx.setLineDash(dash || []);
    ctx.beginPath();
    values.forEach((v, i) => {
      const x = (i / Math.max(values.length - 1, 1)) * (width - 10) + 5;
      const y = height - 5 - (v / yMax) * (height - 10);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

const palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

function updateSchedule() {
  try {
    schedule = new Schedule(+$("steps").value, +$("beta-start").value, +$("beta-end").value);
  } catch (e) {
    $("schedule-stats").textContent = String(e);
    return;
  }
  const ab = schedule.alphaBar();
  const beta = schedule.beta();
  const maxBeta = Math.max(...beta);
  plot($("schedule-plot"), [
    { values: ab, color: "#1f77b4" },
    { values: Array.from(beta, (b) => b / maxBeta), color: "#d62728", dash: [4, 3] },
  ], 1);
  $("schedule-stats").textContent =
    `blue: ᾱ_t   red (dashed): β_t / ${maxBeta.toPrecision(3)}\n` +
    `ᾱ_T = ${ab[ab.length - 1].toExponential(3)}   signal left at the last step: ${Math.sqrt(ab[ab.length - 1]).toExponential(3)}`;
  $("t").max = schedule.steps();
  if (+$("t").value > schedule.steps()) $("t").value = schedule.steps();
  updateForward();
}

function drawScene() {
  const size = scene.size();
  drawRgba($("scene-rgb"), scene.rgba(), size);
  const maps = $("maps");
  maps.replaceChildren();
  for (let k = 0; k < scene.endmembers(); k++) {
    const c = document.createElement("canvas");
    drawRgba(c, scene.abundanceRgba(k), size);
    c.title = `abundance ${k}`;
    maps.appendChild(c);
  }
  const c = scene.bands();
  const series = [];
  const truth = scene.trueSpectra();
  const estimate = scene.estimatedSpectra();
  const max = Math.max(...truth, ...estimate);
  for (let k = 0; k < scene.endmembers(); k++) {
    series.push({ values: truth.slice(k * c, (k + 1) * c), color: palette[k % palette.length] });
  }
  for (let k = 0; k < estimate.length / c; k++) {
    series.push({ values: estimate.slice(k * c, (k + 1) * c), color: "#000", dash: [3, 3] });
  }
  plot($("spectra-plot"), series, max * 1.05);
}

function generate() {
  try {
    scene = new Scene(BigInt($("seed").value), +$("d").value, +$("size").value, +$("noise").value);
  } catch (e) {
    $("unmix-stats").textContent = String(e);
    return;
  }
  $("unmix-stats").textContent = "colored: true endmember spectra; maps show true abundances";
  drawScene();
  updateForward();
}

function unmix() {
  if (!scene) return;
  try {
    const [rmse, angle, worst] = scene.unmix($("fcls").checked, BigInt($("seed").value));
    $("unmix-stats").textContent =
      `dashed: VCA endmembers; maps show estimated abundances\n` +
      `reconstruction rmse ${rmse.toExponential(3)}   mean spectral angle ${angle.toExponential(3)} rad\n` +
      `worst endmember angle to ground truth ${worst.toExponential(3)} rad`;
  } catch (e) {
    $("unmix-stats").textContent = String(e);
  }
  drawScene();
  updateForward();
}

function updateForward() {
  if (!scene || !schedule) return;
  const t = +$("t").value;
  $("t-value").textContent = t;
  try {
    drawRgba($("forward-rgb"), scene.forwardRgba(schedule, t, 7n), scene.size());
  } catch (e) {
    $("t-value").textContent = `${t}: ${e}`;
  }
}

await init();
for (const id of ["steps", "beta-start", "beta-end"]) $(id).addEventListener("change", updateSchedule);
$("scaled").addEventListener("click", () => {
  const s = Schedule.scaled(+$("steps").value);
  const beta = s.beta();
  $("beta-start").value = beta[0].toPrecision(4);
  $("beta-end").value = beta[beta.length - 1].toPrecision(4);
  updateSchedule();
});
$("generate").addEventListener("click", generate);
$("unmix").addEventListener("click", unmix);
$("t").addEventListener("input", updateForward);
updateSchedule();
generate();
