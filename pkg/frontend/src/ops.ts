/** Client-side edit-op validation and inverses.
 *
 * The rules mirror the engine's: unit axis/direction within 1e-9, positive
 * finite scale factor, finite angle. Ops are validated here before they are
 * submitted so obviously-bad input never leaves the browser.
 */

import type { EditOpJson, Vec3 } from "./types.js";

const UNIT_TOL = 1e-9;

function norm(v: Vec3): number {
  return Math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

export function validateOp(op: EditOpJson): string[] {
  const problems: string[] = [];
  switch (op.type) {
    case "rotate":
      if (Math.abs(norm(op.axis) - 1) > UNIT_TOL) {
        problems.push("rotation axis must be unit length");
      }
      if (!Number.isFinite(op.angle_deg)) {
        problems.push("rotation angle must be finite");
      }
      break;
    case "translate":
      if (Math.abs(norm(op.dir) - 1) > UNIT_TOL) {
        problems.push("translation direction must be unit length");
      }
      if (!Number.isFinite(op.dist)) {
        problems.push("translation distance must be finite");
      }
      break;
    case "scale":
      if (!(op.factor > 0) || !Number.isFinite(op.factor)) {
        problems.push("scale factor must be positive");
      }
      break;
    default:
      problems.push("unknown op type");
  }
  return problems;
}

/** Rotate(-theta), Translate(-lambda t), Scale(1/alpha). */
export function inverseOp(op: EditOpJson): EditOpJson {
  switch (op.type) {
    case "rotate":
      return { ...op, angle_deg: -op.angle_deg };
    case "translate":
      return { ...op, dist: -op.dist };
    case "scale":
      return { ...op, factor: 1 / op.factor };
  }
}

export function normalize(v: Vec3): Vec3 {
  const n = norm(v);
  if (n < 1e-12) {
    throw new Error("cannot normalize a zero vector");
  }
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Snap an angle to the given increment (gizmo default: 5 degrees). */
export function snapAngle(angleDeg: number, increment = 5): number {
  if (increment <= 0) return angleDeg;
  return Math.round(angleDeg / increment) * increment;
}
