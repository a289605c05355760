import init, { sroc, compare, table_row } from "./pkg/dtamix_web.js";

const SAMPLE = `study,TP,FN,FP,TN
s1,50,22,17,75
s2,34,7,2,38
s3,23,3,3,30
s4,44,20,6,75
s5,28,3,4,29
s6,42,26,3,84
s7,102,25,24,125
s8,35,13,17,41
s9,48,24,6,91
s10,39,23,4,69
s11,44,19,2,101
s12,100,70,3,193`;

const $ = (id) => document.getElementById(id);
const SIZE = 440, PAD = 36, SPAN = SIZE - 2 * PAD;
const sx = (x) => PAD + x * SPAN;
const sy = (y) => SIZE - PAD - y * SPAN;
const path = (pts, close) =>
  pts.map(([x, y], i) => `${i ? "L" : "M"}${sx(x).toFixed(1)},${sy(y).toFixed(1)}`).join("") + (close ? "Z" : "");

function fmt(v, d = 4) {
  return v === null || v === undefined ? "" : Number(v).toFixed(d);
}

function later(fn) {
  return (...args) => setTimeout(() => fn(...args), 20);
}

function draw(res) {
  const el = [];
  for (let t = 0; t <= 10; t += 2) {
    const v = t / 10;
    el.push(`<line x1="${sx(v)}" y1="${sy(0)}" x2="${sx(v)}" y2="${sy(1)}" stroke="#eee"/>`);
    el.push(`<line x1="${sx(0)}" y1="${sy(v)}" x2="${sx(1)}" y2="${sy(v)}" stroke="#eee"/>`);
    el.push(`<text x="${sx(v)}" y="${SIZE - PAD + 16}" font-size="11" text-anchor="middle">${v}</text>`);
    el.push(`<text x="${PAD - 6}" y="${sy(v) + 4}" font-size="11" text-anchor="end">${v}</text>`);
  }
  el.push(`<rect x="${PAD}" y="${PAD}" width="${SPAN}" height="${SPAN}" fill="none" stroke="#888"/>`);
  el.push(`<text x="${SIZE / 2}" y="${SIZE - 4}" font-size="12" text-anchor="middle">1 - specificity</text>`);
  el.push(`<text x="12" y="${SIZE / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 12 ${SIZE / 2})">sensitivity</text>`);

  const maxN = Math.max(...res.studies.map((s) => s[2]));
  for (const [x, y, n] of res.studies) {
    el.push(`<circle cx="${sx(x)}" cy="${sy(y)}" r="${(2 + 6 * Math.sqrt(n / maxN)).toFixed(1)}" fill="none" stroke="#555"/>`);
  }
  for (const r of res.predictive_regions) {
    for (const loop of r.loops) {
      el.push(`<path d="${path(loop, true)}" fill="none" stroke="#2a7" stroke-dasharray="4 3"/>`);
    }
  }
  if (res.confidence_region) {
    el.push(`<path d="${path(res.confidence_region, true)}" fill="#c33" fill-opacity="0.12" stroke="#c33"/>`);
  }
  res.curves.forEach((c, i) => {
    el.push(`<path d="${path(c.points, false)}" fill="none" stroke="#236" stroke-width="${i ? 1 : 2}" ${i ? 'stroke-dasharray="6 3"' : ""}/>`);
  });
  const [px, py] = res.summary_point;
  el.push(`<circle cx="${sx(px)}" cy="${sy(py)}" r="4" fill="#c33"/>`);
  $("plot").innerHTML = el.join("");
}

function showFit(res) {
  const f = res.fit;
  const lines = [
    `${f.model}: log-likelihood ${fmt(f.loglik, 3)}`,
    `pi1 ${fmt(f.pi1)} (${fmt(f.se[0])})   pi2 ${fmt(f.pi2)} (${fmt(f.se[1])})`,
    `scale1 ${fmt(f.scale1)} (${fmt(f.se[2])})   scale2 ${fmt(f.scale2)} (${fmt(f.se[3])})`,
    `theta ${fmt(f.theta)}   tau ${fmt(f.tau)} (${fmt(f.se_tau)})`,
  ];
  if (f.boundary) lines.push("countermonotonic boundary fit");
  lines.push(...f.diagnostics, ...res.notes);
  $("estimates").textContent = lines.join("\n");
}

function runFit() {
  $("fit-error").textContent = "";
  $("estimates").textContent = "fitting...";
  later(() => {
    try {
      const res = JSON.parse(sroc($("data").value, $("model").value, Number($("nq").value), $("quantiles").value, $("levels").value));
      showFit(res);
      draw(res);
    } catch (e) {
      $("estimates").textContent = "";
      $("fit-error").textContent = String(e);
    }
  })();
}

function runCompare() {
  $("compare-error").textContent = "";
  $("comparison").innerHTML = `<tr><td class="busy">fitting...</td></tr>`;
  later(() => {
    try {
      const rows = JSON.parse(compare($("data").value, $("compare-models").value, Number($("nq").value)));
      const head = "<tr><th>model</th><th>log-likelihood</th><th>tau</th><th>Vuong z</th><th>p</th><th>status</th></tr>";
      $("comparison").innerHTML = head + rows
        .map((r) => `<tr><td>${r.model}</td><td>${fmt(r.loglik, 3)}</td><td>${fmt(r.tau, 3)}</td><td>${fmt(r.vuong_statistic, 3)}</td><td>${fmt(r.vuong_p_value, 3)}</td><td>${r.status}</td></tr>`)
        .join("");
    } catch (e) {
      $("comparison").innerHTML = "";
      $("compare-error").textContent = String(e);
    }
  })();
}

function runTable() {
  $("table-error").textContent = "";
  $("table-row").innerHTML = `<tr><td class="busy">computing...</td></tr>`;
  later(() => {
    try {
      const r = JSON.parse(table_row(Number($("t-rho").value), Number($("t-pi").value), Number($("t-gamma").value), Number($("t-n").value)));
      $("table-row").innerHTML =
        "<tr><th></th><th>rho</th><th>pi</th><th>gamma</th></tr>" +
        `<tr><td>true</td><td>${fmt(r.rho_true, 3)}</td><td>${fmt(r.pi_true, 3)}</td><td>${fmt(r.gamma_true, 3)}</td></tr>` +
        `<tr><td>KHS limit (n = ${r.n})</td><td>${fmt(r.rho_khs, 3)}</td><td>${fmt(r.pi_khs, 3)}</td><td>${fmt(r.gamma_khs, 3)}</td></tr>` +
        (r.converged ? "" : `<tr><td colspan="4">optimiser did not converge</td></tr>`);
    } catch (e) {
      $("table-row").innerHTML = "";
      $("table-error").textContent = String(e);
    }
  })();
}

await init();
$("data").value = SAMPLE;
$("fit").addEventListener("click", runFit);
$("compare").addEventListener("click", runCompare);
$("table").addEventListener("click", runTable);
runFit();
