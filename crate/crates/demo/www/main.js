import init, { Ring, Crowd } from './pkg/visitsolve_demo.js';

const STOPS = [
  [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
];
const PATH_COLORS = ['#ffffff', '#ff7f0e', '#d62728', '#e377c2', '#17becf', '#bcbd22', '#9467bd', '#000000'];

function colormap(u) {
  const s = Math.min(Math.max(u, 0), 1) * (STOPS.length - 1);
  const i = Math.min(Math.floor(s), STOPS.length - 2);
  const f = s - i;
  return STOPS[i].map((c, j) => Math.round(c + f * (STOPS[i + 1][j] - c)));
}

// Paints a node-ordered field (last axis fastest) with y pointing up.
function paint(canvas, field, nx, ny, lo, hi) {
  const off = document.createElement('canvas');
  off.width = nx;
  off.height = ny;
  const octx = off.getContext('2d');
  const img = octx.createImageData(nx, ny);
  const span = hi > lo ? hi - lo : 1;
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      const [r, g, b] = colormap((field[i * ny + j] - lo) / span);
      const o = 4 * ((ny - 1 - j) * nx + i);
      img.data[o] = r;
      img.data[o + 1] = g;
      img.data[o + 2] = b;
      img.data[o + 3] = 255;
    }
  }
  octx.putImageData(img, 0, 0);
  const ctx = canvas.getContext('2d');
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  return ctx;
}

function bitstring(bits, n) {
  let s = '';
  for (let j = 1; j <= n; j++) s += (bits >> (n - j)) & 1;
  return s;
}

const $ = (id) => document.getElementById(id);
const status = $('status');

let ring = null;
let path = null;

function toCanvas(x, y, canvas) {
  const lo = ring.lower(), hi = ring.upper();
  return [
    ((x - lo[0]) / (hi[0] - lo[0])) * canvas.width,
    (1 - (y - lo[1]) / (hi[1] - lo[1])) * canvas.height,
  ];
}

function drawRing() {
  const canvas = $('ring');
  const [nx, ny] = ring.nodes_per_axis();
  const level = Number($('level').value);
  const bits = Number($('state').value);
  const v = ring.value(level, bits);
  let lo = Infinity, hi = -Infinity;
  for (const x of v) { lo = Math.min(lo, x); hi = Math.max(hi, x); }
  const ctx = paint(canvas, v, nx, ny, lo, hi);
  $('tval').textContent = `${ring.time(level).toFixed(3)}   V in [${lo.toFixed(3)}, ${hi.toFixed(3)}]`;

  const t = ring.targets();
  for (let j = 0; j < t.length / 2; j++) {
    const [cx, cy] = toCanvas(t[2 * j], t[2 * j + 1], canvas);
    ctx.beginPath();
    ctx.arc(cx, cy, 7, 0, 2 * Math.PI);
    ctx.strokeStyle = '#fff';
    ctx.lineWidth = 2;
    ctx.stroke();
    ctx.fillStyle = '#fff';
    ctx.fillText(String(j + 1), cx + 9, cy - 9);
  }

  if (path) {
    ctx.lineWidth = 2.5;
    for (let r = 1; r < path.length / 4; r++) {
      const [x0, y0] = toCanvas(path[4 * r - 3], path[4 * r - 2], canvas);
      const [x1, y1] = toCanvas(path[4 * r + 1], path[4 * r + 2], canvas);
      ctx.strokeStyle = PATH_COLORS[path[4 * r - 1] % PATH_COLORS.length];
      ctx.beginPath();
      ctx.moveTo(x0, y0);
      ctx.lineTo(x1, y1);
      ctx.stroke();
    }
  }
}

function describePath() {
  const n = ring.n_targets();
  const lines = [];
  let prev = path[3];
  for (let r = 1; r < path.length / 4; r++) {
    const p = path[4 * r + 3];
    if (p !== prev) {
      lines.push(`t=${path[4 * r].toFixed(3)}  ${bitstring(prev, n)} -> ${bitstring(p, n)}`);
      prev = p;
    }
  }
  const last = path.length - 4;
  lines.push(`end t=${path[last].toFixed(3)} at (${path[last + 1].toFixed(3)}, ${path[last + 2].toFixed(3)})`);
  $('ringinfo').textContent = lines.join('\n');
}

function solveRing() {
  const dx = Number($('mesh').value);
  status.textContent = `Solving the ring at dx = ${dx}...`;
  setTimeout(() => {
    const t0 = performance.now();
    ring = new Ring(dx);
    path = null;
    $('ringinfo').textContent = '';
    const n = ring.n_targets();
    const sel = $('state');
    const keep = sel.value;
    sel.innerHTML = '';
    for (let b = 0; b < 1 << n; b++) {
      const o = document.createElement('option');
      o.value = b;
      o.textContent = bitstring(b, n);
      sel.appendChild(o);
    }
    sel.value = keep || '0';
    $('level').max = ring.n_levels() - 1;
    $('level').value = 0;
    status.textContent = `Ring solved in ${(performance.now() - t0).toFixed(0)} ms.`;
    drawRing();
  }, 10);
}

$('ring').addEventListener('click', (ev) => {
  if (!ring) return;
  const canvas = ev.currentTarget;
  const rect = canvas.getBoundingClientRect();
  const lo = ring.lower(), hi = ring.upper();
  const x = lo[0] + ((ev.clientX - rect.left) / rect.width) * (hi[0] - lo[0]);
  const y = hi[1] - ((ev.clientY - rect.top) / rect.height) * (hi[1] - lo[1]);
  try {
    path = ring.trajectory(x, y, Number($('state').value));
    describePath();
  } catch (e) {
    $('ringinfo').textContent = String(e);
  }
  drawRing();
});
$('state').addEventListener('change', drawRing);
$('level').addEventListener('input', drawRing);
$('mesh').addEventListener('change', solveRing);

let crowd = null;
let peak = 0;
let timer = null;

function drawCrowd() {
  const k = Number($('frame').value);
  const [nx, ny] = crowd.nodes_per_axis();
  paint($('crowd'), crowd.density(k), nx, ny, 0, peak);
  $('fval').textContent = `t = ${crowd.time(k).toFixed(2)}`;
  $('crowdinfo').textContent = `live mass ${(100 * crowd.live_fraction(k)).toFixed(2)} % of the initial mass`;
}

$('frame').addEventListener('input', drawCrowd);
$('play').addEventListener('click', () => {
  if (timer) {
    clearInterval(timer);
    timer = null;
    $('play').textContent = 'play';
    return;
  }
  $('play').textContent = 'pause';
  timer = setInterval(() => {
    const f = $('frame');
    f.value = (Number(f.value) + 1) % crowd.n_levels();
    drawCrowd();
  }, 300);
});

await init();
crowd = new Crowd(0);
for (let k = 0; k < crowd.n_levels(); k++) {
  for (const v of crowd.density(k)) peak = Math.max(peak, v);
}
$('frame').max = crowd.n_levels() - 1;
drawCrowd();
solveRing();
