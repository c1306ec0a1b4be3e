import init, { trajectory, adjoint, screen } from "./pkg/fracopt_wasm.js";

const ops = { trajectory, adjoint, screen };
const colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const status = document.getElementById("status");
const details = document.getElementById("details");
const canvas = document.getElementById("plot");

function inputs() {
  return [
    document.getElementById("example").value,
    Number(document.getElementById("alpha").value),
    Number(document.getElementById("steps").value),
    Number(document.getElementById("control").value),
  ];
}

// series: [{label, values}] sharing the abscissa t; null values leave gaps
function plot(t, series) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 48;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.values).filter((v) => v !== null && Number.isFinite(v));
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi - lo < 1e-12) { lo -= 1; hi += 1; }
  const x = (v) => pad + ((v - t[0]) / (t[t.length - 1] - t[0])) * (w - 2 * pad);
  const y = (v) => h - pad - ((v - lo) / (hi - lo)) * (h - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(hi.toPrecision(4), 2, pad + 4);
  ctx.fillText(lo.toPrecision(4), 2, h - pad);
  ctx.fillText(String(t[0]), pad, h - pad + 16);
  ctx.fillText(String(t[t.length - 1]), w - pad - 10, h - pad + 16);
  series.forEach((s, k) => {
    ctx.strokeStyle = colors[k % colors.length];
    ctx.setLineDash(s.dashed ? [6, 4] : []);
    ctx.beginPath();
    let open = false;
    s.values.forEach((v, i) => {
      if (v === null || !Number.isFinite(v)) { open = false; return; }
      if (open) ctx.lineTo(x(t[i]), y(v)); else ctx.moveTo(x(t[i]), y(v));
      open = true;
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, w - pad - 150, pad + 16 + 14 * k);
  });
  ctx.setLineDash([]);
}

const render = {
  trajectory(r) {
    plot(r.t, r.y.map((values, k) => ({ label: `y${k + 1}`, values })));
    let text = `J = ${r.cost}`;
    if (r.reference_cost !== null) text += `\nclosed form J(-1/2) = ${r.reference_cost}\nerror = ${Math.abs(r.cost - r.reference_cost).toExponential(3)}`;
    details.textContent = text;
  },
  adjoint(r) {
    const series = r.psi.map((values, k) => ({ label: `psi${k + 1}`, values }));
    if (r.reference_psi2) series.push({ label: "psi2 closed form", values: r.reference_psi2, dashed: true });
    plot(r.t, series);
    details.textContent = `psi(0) = [${r.psi.map((c) => c[0]).join(", ")}]`;
  },
  screen(r) {
    plot(r.t, [
      { label: "first-order gap", values: r.gap },
      { label: "max second-order form", values: r.second },
    ]);
    details.textContent = r.summary.join("\n");
  },
};

function run(op) {
  const started = performance.now();
  try {
    const result = JSON.parse(ops[op](...inputs()));
    render[op](result);
    status.className = "";
    status.textContent = `${op} finished in ${(performance.now() - started).toFixed(0)} ms`;
  } catch (e) {
    status.className = "error";
    status.textContent = String(e.message ?? e);
  }
}

await init();
status.textContent = "Ready.";
document.querySelectorAll("button[data-op]").forEach((b) => b.addEventListener("click", () => run(b.dataset.op)));
run("trajectory");
