import init, { allocate_bandwidth, threshold_sweep, rate_curve } from "./pkg/hpfl_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function fail(target, err) {
  $(target).innerHTML = `<p class="err">${String(err)}</p>`;
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function line(ctx, xs, ys, xmax, ymax, w, h, pad, colour) {
  ctx.strokeStyle = colour;
  ctx.beginPath();
  xs.forEach((x, i) => {
    const px = pad + (x / xmax) * (w - 2 * pad);
    const py = h - pad - (ys[i] / ymax) * (h - 2 * pad);
    if (i === 0) ctx.moveTo(px, py); else ctx.lineTo(px, py);
  });
  ctx.stroke();
}

function runAllocation() {
  try {
    const input = {
      total_hz: num("alloc-total") * 1e6,
      b_min_hz: num("alloc-floor") * 1e3,
      payload_bits: num("alloc-payload") * 1e6,
      edges: JSON.parse($("alloc-edges").value),
    };
    const out = JSON.parse(allocate_bandwidth(JSON.stringify(input)));
    const rows = out.progressive.edges.map((e, k) => {
      const q = out.equal.edges[k];
      return `<tr><td>${k}</td><td>${e.latency_s.toFixed(4)}</td><td>${q.latency_s.toFixed(4)}</td>` +
        `<td>${(e.es_hz / 1e6).toFixed(3)}</td><td>${e.ue_hz.map((b) => (b / 1e6).toFixed(3)).join(", ")}</td></tr>`;
    });
    $("alloc-out").innerHTML =
      `<p>Round latency: progressive ${out.progressive.latency_s.toFixed(4)} s, equal ${out.equal.latency_s.toFixed(4)} s</p>` +
      `<table><tr><th>server</th><th>progressive (s)</th><th>equal (s)</th><th>uplink MHz</th><th>UE MHz</th></tr>${rows.join("")}</table>`;
    const c = $("alloc-canvas").getContext("2d");
    const { width: w, height: h } = $("alloc-canvas");
    const pad = 20;
    axes(c, w, h, pad);
    const lat = out.progressive.edges.map((e, k) => [e.latency_s, out.equal.edges[k].latency_s]);
    const ymax = Math.max(...lat.flat()) * 1.1;
    const slot = (w - 2 * pad) / lat.length;
    lat.forEach(([p, q], k) => {
      const bar = slot / 3;
      c.fillStyle = "#1f77b4";
      c.fillRect(pad + k * slot + bar * 0.5, h - pad - (p / ymax) * (h - 2 * pad), bar, (p / ymax) * (h - 2 * pad));
      c.fillStyle = "#ff7f0e";
      c.fillRect(pad + k * slot + bar * 1.5, h - pad - (q / ymax) * (h - 2 * pad), bar, (q / ymax) * (h - 2 * pad));
    });
  } catch (err) {
    fail("alloc-out", err);
  }
}

function runThreshold() {
  try {
    const input = {
      ...JSON.parse($("thr-input").value),
      phi: num("thr-phi"),
      a_max: parseInt($("thr-cap").value, 10),
      s: parseInt($("thr-s").value, 10),
      steps: 40,
    };
    const pts = JSON.parse(threshold_sweep(JSON.stringify(input)));
    const c = $("thr-canvas").getContext("2d");
    const { width: w, height: h } = $("thr-canvas");
    const pad = 20;
    axes(c, w, h, pad);
    const rho = pts.map((p) => p.rho);
    const imp = pts.map((p) => p.importance);
    const lat = pts.map((p) => p.max_latency_s);
    line(c, rho, imp, 1, Math.max(...imp, 1e-12) * 1.1, w, h, pad, "#2ca02c");
    line(c, rho, lat, 1, Math.max(...lat, 1e-12) * 1.1, w, h, pad, "#d62728");
    const rows = pts.filter((_, i) => i % 4 === 0).map((p) =>
      `<tr><td>${p.rho.toFixed(2)}</td><td>${p.passing}</td><td>${p.selected}</td><td>${p.objective.toFixed(4)}</td></tr>`);
    $("thr-out").innerHTML =
      `<table><tr><th>weight on importance</th><th>passing</th><th>selected</th><th>objective</th></tr>${rows.join("")}</table>`;
  } catch (err) {
    fail("thr-out", err);
  }
}

function runRate() {
  try {
    const input = {
      distance_m: num("rate-dist"),
      payload_bits: num("rate-payload") * 1e6,
      max_hz: num("rate-max") * 1e6,
      samples: 200,
      deadline_s: num("rate-deadline"),
    };
    const out = JSON.parse(rate_curve(JSON.stringify(input)));
    const c = $("rate-canvas").getContext("2d");
    const { width: w, height: h } = $("rate-canvas");
    const pad = 20;
    axes(c, w, h, pad);
    const ymax = out.rate_limit_bps * 1.05;
    line(c, out.bandwidth_hz, out.rate_bps, input.max_hz, ymax, w, h, pad, "#1f77b4");
    line(c, [0, input.max_hz], [out.rate_limit_bps, out.rate_limit_bps], input.max_hz, ymax, w, h, pad, "#aaa");
    const need = out.deadline_hz === null
      ? "no bandwidth meets the deadline"
      : `${(out.deadline_hz / 1e6).toFixed(4)} MHz meets the deadline`;
    $("rate-out").innerHTML =
      `<p>Rate limit ${(out.rate_limit_bps / 1e6).toFixed(3)} Mbit/s, fastest upload ${out.min_upload_s.toFixed(4)} s; ${need}.</p>`;
  } catch (err) {
    fail("rate-out", err);
  }
}

await init();
$("status").textContent = "Ready.";
$("alloc-run").addEventListener("click", runAllocation);
$("thr-run").addEventListener("click", runThreshold);
$("rate-run").addEventListener("click", runRate);
runAllocation();
runThreshold();
runRate();
