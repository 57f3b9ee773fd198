import init, {
  scenario_diagnostics,
  analytic_curves,
  simulate_forest_json,
  mc_verify_json,
} from "./pkg/csbp_backbone_wasm.js";

const DEFAULT_CONFIG = {
  mechanism: { alpha: -1.0, beta: 1.0, jumps: { type: "zero" } },
  immigration: { delta: 1.0, jumps: { type: "zero" } },
  initial_mass: 1.0,
  horizon: 1.0,
  r_grid: [0.0, 0.5, 1.0],
  theta_grid: [0.0, 0.5, 1.0, 2.0],
  replicates: 4000,
  seed: 1,
};

const $ = (id) => document.getElementById(id);
const configText = () => $("config").value;

const PALETTE = ["#6cb8ff", "#58c97b", "#e6b84c", "#e06c5f", "#b88cf0", "#59c4c4", "#d98cc0"];

function fitCanvas(canvas) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth;
  const h = parseInt(canvas.getAttribute("height"), 10);
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, w, h);
  return [ctx, w, h];
}

// ---------- diagnostics + curves ----------

function showError(el, e) {
  el.innerHTML = `<pre class="err">${String(e)}</pre>`;
}

function runDiagnostics() {
  const out = $("diag-out");
  try {
    const d = JSON.parse(scenario_diagnostics(configText()));
    out.innerHTML = `<pre>digest            ${d.digest}
lambda_star       ${d.lambda_star.toPrecision(12)}
branch rate q     ${d.branch_rate.toPrecision(12)}
immigration p     ${d.immigration_rate.toPrecision(12)}
psi'(0+)          ${d.psi_prime_at_origin.toPrecision(6)}
immigration       ${d.immigration_enabled ? "enabled" : "disabled"}</pre>`;
    drawCurves();
  } catch (e) {
    showError(out, e);
  }
}

function drawCurves() {
  const note = $("curves-note");
  let data;
  try {
    data = JSON.parse(analytic_curves(configText(), 200));
  } catch (e) {
    showError(note, e);
    return;
  }
  const [ctx, W, H] = fitCanvas($("curves"));
  const pad = { l: 46, r: 12, t: 10, b: 26 };
  let xMax = 0, yMax = 0;
  for (const s of data.series) {
    xMax = Math.max(xMax, ...s.xs);
    // v* blows up near t = 0; clip the plot range to something readable.
    const cap = 4 * data.lambda_star;
    yMax = Math.max(yMax, ...s.ys.filter((y) => y < cap));
  }
  yMax = Math.max(yMax, 1.3 * data.lambda_star);
  const x2px = (x) => pad.l + (x / xMax) * (W - pad.l - pad.r);
  const y2px = (y) => H - pad.b - (y / yMax) * (H - pad.t - pad.b);

  ctx.strokeStyle = "#2a313b";
  ctx.fillStyle = "#8a93a1";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  for (let i = 0; i <= 4; i++) {
    const y = (yMax * i) / 4;
    ctx.moveTo(pad.l, y2px(y));
    ctx.lineTo(W - pad.r, y2px(y));
    ctx.fillText(y.toFixed(2), 6, y2px(y) + 4);
  }
  for (let i = 0; i <= 5; i++) {
    const x = (xMax * i) / 5;
    ctx.fillText(x.toFixed(2), x2px(x) - 8, H - 8);
  }
  ctx.stroke();

  // The root is the fixed point of the flow; draw it as a reference line.
  ctx.strokeStyle = "#4a5260";
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  ctx.moveTo(pad.l, y2px(data.lambda_star));
  ctx.lineTo(W - pad.r, y2px(data.lambda_star));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillText("lambda*", W - pad.r - 52, y2px(data.lambda_star) - 4);

  data.series.forEach((s, i) => {
    ctx.strokeStyle = PALETTE[i % PALETTE.length];
    ctx.lineWidth = s.name.startsWith("v*") ? 2 : 1.4;
    ctx.beginPath();
    let started = false;
    for (let k = 0; k < s.xs.length; k++) {
      if (s.ys[k] > yMax) { started = false; continue; }
      const px = x2px(s.xs[k]), py = y2px(s.ys[k]);
      if (!started) { ctx.moveTo(px, py); started = true; } else ctx.lineTo(px, py);
    }
    ctx.stroke();
  });
  note.innerHTML = data.series
    .map((s, i) => `<span style="color:${PALETTE[i % PALETTE.length]}">&#9632;</span> ${s.name}`)
    .join(" &nbsp; ");
}

// ---------- forest ----------

function layoutForest(forest) {
  const children = new Map();
  for (const ind of forest.individuals) {
    if (ind.parent !== null) {
      if (!children.has(ind.parent)) children.set(ind.parent, []);
      children.get(ind.parent).push(ind.id);
    }
  }
  const width = new Map();
  const measure = (id) => {
    const kids = children.get(id) || [];
    if (kids.length === 0) { width.set(id, 1); return 1; }
    let w = 0;
    for (const k of kids) w += measure(k);
    width.set(id, w);
    return w;
  };
  const xpos = new Map();
  const place = (id, left) => {
    const kids = children.get(id) || [];
    if (kids.length === 0) { xpos.set(id, left + 0.5); return; }
    let cursor = left;
    for (const k of kids) { place(k, cursor); cursor += width.get(k); }
    const xs = kids.map((k) => xpos.get(k));
    xpos.set(id, (Math.min(...xs) + Math.max(...xs)) / 2);
  };
  let cursor = 0;
  const roots = forest.individuals.filter((i) => i.parent === null);
  for (const r of roots) { measure(r.id); place(r.id, cursor); cursor += width.get(r.id); }
  return { xpos, total: Math.max(cursor, 1) };
}

function drawForest() {
  const out = $("forest-out");
  let data;
  try {
    data = JSON.parse(simulate_forest_json(configText(), BigInt($("forest-seed").value)));
  } catch (e) {
    showError(out, e);
    return;
  }
  const f = data.forest;
  const [ctx, W, H] = fitCanvas($("forest"));
  const pad = { l: 40, r: 16, t: 14, b: 24 };
  const { xpos, total } = layoutForest(f);
  const spineX = pad.l * 0.45;
  const x2px = (x) => pad.l + ((x + 0.25) / (total + 0.5)) * (W - pad.l - pad.r);
  const t2px = (t) => pad.t + (t / f.horizon) * (H - pad.t - pad.b);

  // time axis
  ctx.strokeStyle = "#2a313b";
  ctx.fillStyle = "#8a93a1";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  for (let i = 0; i <= 4; i++) {
    const t = (f.horizon * i) / 4;
    ctx.moveTo(pad.l, t2px(t));
    ctx.lineTo(W - pad.r, t2px(t));
    ctx.fillText(t.toFixed(2), 4, t2px(t) + 4);
  }
  ctx.stroke();

  // immigration spine and event arrows
  if (f.immigration_events.length > 0 || data.lambda > 0) {
    ctx.strokeStyle = "#4a5260";
    ctx.setLineDash([3, 4]);
    ctx.beginPath();
    ctx.moveTo(spineX, t2px(0));
    ctx.lineTo(spineX, t2px(f.horizon));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const ev of f.immigration_events) {
    ctx.strokeStyle = "#e6b84c";
    ctx.beginPath();
    ctx.moveTo(spineX, t2px(ev.time));
    ctx.lineTo(pad.l, t2px(ev.time));
    ctx.stroke();
  }

  // lifelines
  for (const ind of f.individuals) {
    const x = x2px(xpos.get(ind.id));
    const t0 = t2px(ind.birth);
    const t1 = t2px(ind.death === null ? f.horizon : ind.death);
    ctx.strokeStyle = ind.death === null ? "#6cb8ff" : "#9aa6b5";
    ctx.lineWidth = ind.death === null ? 2 : 1.2;
    ctx.beginPath();
    ctx.moveTo(x, t0);
    ctx.lineTo(x, t1);
    ctx.stroke();
  }
  // branch connectors + graft marks
  for (const ev of f.branch_events) {
    const kids = f.individuals.filter(
      (c) => c.parent === ev.parent && c.birth === ev.time
    );
    const xs = kids.map((k) => x2px(xpos.get(k.id)));
    const y = t2px(ev.time);
    ctx.strokeStyle = "#9aa6b5";
    ctx.lineWidth = 1.2;
    ctx.beginPath();
    ctx.moveTo(Math.min(...xs), y);
    ctx.lineTo(Math.max(...xs), y);
    ctx.stroke();
    if (ev.seed_mass > 0) {
      ctx.fillStyle = "#e06c5f";
      ctx.beginPath();
      ctx.arc(x2px(xpos.get(ev.parent)), y, 2.5 + 2.5 * Math.min(ev.seed_mass, 3), 0, 7);
      ctx.fill();
    }
  }
  for (const ev of f.immigration_events) {
    if (ev.seed_mass > 0) {
      ctx.fillStyle = "#e06c5f";
      ctx.beginPath();
      ctx.arc(spineX, t2px(ev.time), 2.5 + 2.5 * Math.min(ev.seed_mass, 3), 0, 7);
      ctx.fill();
    }
  }

  out.innerHTML = `Z<sub>t</sub> = <b>${data.z}</b> alive of ${f.individuals.length} individuals, ` +
    `&Lambda;<sub>t</sub> = <b>${data.lambda.toFixed(4)}</b>, ` +
    `${f.branch_events.length} branch events, ${f.immigration_events.length} immigration arrivals. ` +
    `Given &Lambda;<sub>t</sub>, the skeleton count is Poisson(&lambda;*&Lambda;<sub>t</sub>) = ` +
    `Poisson(${(data.lambda_star * data.lambda).toFixed(3)}).`;
}

// ---------- MC grid ----------

function runMc() {
  const out = $("mc-out");
  out.innerHTML = `<div class="stat">running...</div>`;
  setTimeout(() => {
    let rep;
    try {
      rep = JSON.parse(
        mc_verify_json(configText(), Number($("mc-n").value), BigInt($("mc-seed").value))
      );
    } catch (e) {
      showError(out, e);
      return;
    }
    const color = (z) => {
      const a = Math.abs(z);
      return a > 4 ? "var(--bad)" : a > 2 ? "var(--warn)" : "var(--good)";
    };
    let html = `<table><tr><th>r</th><th>&theta;</th><th>target</th><th>estimate</th><th>std err</th><th>z</th></tr>`;
    for (const row of rep.rows) {
      html += `<tr><td>${row.r}</td><td>${row.theta}</td><td>${row.target.toFixed(6)}</td>` +
        `<td>${row.estimate.toFixed(6)}</td><td>${row.std_err.toExponential(2)}</td>` +
        `<td style="color:${color(row.z)}">${row.z.toFixed(2)}</td></tr>`;
    }
    html += `</table><div class="stat">N = ${rep.replicates}, seed ${rep.master_seed}, ` +
      `digest ${rep.scenario_digest}. Every |z| should stay below 4 with only occasional ` +
      `excursions above 2.</div>`;
    out.innerHTML = html;
  }, 30);
}

async function main() {
  await init();
  $("config").value = JSON.stringify(DEFAULT_CONFIG, null, 2);
  $("btn-diag").addEventListener("click", runDiagnostics);
  $("btn-forest").addEventListener("click", drawForest);
  $("btn-mc").addEventListener("click", runMc);
  runDiagnostics();
  drawForest();
}

main();
