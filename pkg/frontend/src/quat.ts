/**
 * Quaternion and small-vector helpers.
 *
 * Quaternions are [w, x, y, z]; formulas mirror the core engine exactly,
 * including its small-angle series cutoffs, so results agree to within
 * rounding noise.
 */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export const IDENTITY: Quat = [1, 0, 0, 0];

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

export function mul(q1: Quat, q2: Quat): Quat {
  const [w1, x1, y1, z1] = q1;
  const [w2, x2, y2, z2] = q2;
  return [
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
  ];
}

export function conj(q: Quat): Quat {
  return [q[0], -q[1], -q[2], -q[3]];
}

export function rotate(q: Quat, v: Vec3): Vec3 {
  const u: Vec3 = [q[1], q[2], q[3]];
  const t = scale(cross(u, v), 2);
  const wt = scale(t, q[0]);
  const ut = cross(u, t);
  return [v[0] + wt[0] + ut[0], v[1] + wt[1] + ut[1], v[2] + wt[2] + ut[2]];
}

export function fromRotvec(r: Vec3): Quat {
  const angle = norm(r);
  const half = 0.5 * angle;
  // sin(x)/x series below 1e-8 keeps tiny rotations exact
  const k = angle < 1e-8 ? 0.5 - (angle * angle) / 48 : Math.sin(half) / angle;
  return [Math.cos(half), k * r[0], k * r[1], k * r[2]];
}

/** Rotation vector with the full angle in [0, pi]. */
export function toRotvec(q: Quat): Vec3 {
  let [w, x, y, z] = q;
  if (w < 0) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
  const sinHalf = Math.sqrt(x * x + y * y + z * z);
  const angle = 2 * Math.atan2(sinHalf, w);
  const k = sinHalf < 1e-8 ? 2 + (angle * angle) / 12 : angle / sinHalf;
  return [k * x, k * y, k * z];
}

function pymod(a: number, m: number): number {
  return ((a % m) + m) % m;
}

/** Wrap into (-pi, pi]. */
export function wrapAngle(a: number): number {
  return Math.PI - pymod(-a + Math.PI, 2 * Math.PI);
}

/** Twist angle of the swing-twist split about a coordinate axis. */
export function twistAbout(q: Quat, axisIndex: number): number {
  const w = q[0];
  const p = q[1 + axisIndex];
  if (Math.hypot(w, p) < 1e-9) return wrapAngle(0);
  return wrapAngle(2 * Math.atan2(p, w));
}

/**
 * Heading about the up axis; falls back to the projected forward axis when
 * the twist component vanishes (half-turns about a ground axis).
 */
export function headingAbout(q: Quat, upIndex: number): number {
  const degenerate = Math.hypot(q[0], q[1 + upIndex]) < 1e-9;
  if (!degenerate) return twistAbout(q, upIndex);
  const up: Vec3 = [0, 0, 0];
  up[upIndex] = 1;
  const fwd: Vec3 = [0, 0, 0];
  fwd[(upIndex + 1) % 3] = 1;
  const side = cross(up, fwd);
  const f = rotate(q, fwd);
  const s = dot(f, side);
  const c = dot(f, fwd);
  return Math.hypot(s, c) > 1e-9 ? Math.atan2(s, c) : 0;
}
