/** Canvas rendering: skeleton graph with region colors plus the 16^3 coarse
 * occupancy preview, drawn with a simple tumble-orbit orthographic
 * projection. No GL dependency; the preview grid is intentionally coarse so
 * frame rate is never a concern. */

import type { PreviewJson, SkeletonJson, Vec3 } from "./types.js";

export interface Camera {
  /** Azimuth and elevation in radians, plus a zoom factor. */
  yaw: number;
  pitch: number;
  zoom: number;
}

export const REGION_COLORS: Record<string, string> = {
  body: "#8a8a8a",
  leg: "#4e9a06",
  wing: "#3465a4",
  tail: "#c4a000",
  head: "#cc0000",
};

export function regionColor(label: string, instance: number): string {
  const base = REGION_COLORS[label.toLowerCase()] ?? "#888888";
  if (instance <= 1) return base;
  // alternate instances get a lighter tint so pairs are distinguishable
  return base + (instance % 2 === 0 ? "cc" : "99");
}

export function project(p: Vec3, cam: Camera, size: number): [number, number] {
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const x = p[0] * cy + p[2] * sy;
  const z = -p[0] * sy + p[2] * cy;
  const y = p[1] * cp - z * sp;
  const scale = size * 0.8 * cam.zoom;
  return [size / 2 + x * scale, size / 2 - y * scale];
}

/** Decode the service's occupancy run-length encoding into a flat boolean
 * array (x-major, length d^3). The encoding starts with a zero run. */
export function decodeOccupancyRle(runs: number[], d: number): Uint8Array {
  const out = new Uint8Array(d * d * d);
  let value = 0;
  let at = 0;
  for (const run of runs) {
    if (value === 1) {
      out.fill(1, at, at + run);
    }
    at += run;
    value = 1 - value;
  }
  if (at !== out.length) {
    throw new Error(`occupancy RLE covers ${at} cells, expected ${out.length}`);
  }
  return out;
}

export function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  skeleton: SkeletonJson,
  regionOfJoint: (index: number) => string | null,
  cam: Camera,
  size: number,
  selected: string | null,
): void {
  ctx.clearRect(0, 0, size, size);
  ctx.lineWidth = 2;
  for (const [a, b] of skeleton.bones) {
    const pa = skeleton.joints[a];
    const pb = skeleton.joints[b];
    if (!pa || !pb) continue;
    const ref = regionOfJoint(a) ?? regionOfJoint(b);
    const [label, instance] = refLabel(ref);
    ctx.strokeStyle = regionColor(label, instance);
    ctx.globalAlpha = selected === null || ref === selected ? 1.0 : 0.25;
    const [x0, y0] = project(pa, cam, size);
    const [x1, y1] = project(pb, cam, size);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
  }
  ctx.globalAlpha = 1.0;
  ctx.fillStyle = "#222";
  for (const joint of skeleton.joints) {
    const [x, y] = project(joint, cam, size);
    ctx.beginPath();
    ctx.arc(x, y, 2.5, 0, Math.PI * 2);
    ctx.fill();
  }
}

function refLabel(ref: string | null): [string, number] {
  if (!ref) return ["body", 1];
  const bits = ref.split("/");
  return [bits[1] ?? "body", Number(bits[2] ?? 1)];
}

export function drawOccupancy(
  ctx: CanvasRenderingContext2D,
  preview: PreviewJson,
  cam: Camera,
  size: number,
): void {
  const d = preview.resolution;
  if (d === 0) return;
  const occ = decodeOccupancyRle(preview.occupancy_rle, d);
  ctx.clearRect(0, 0, size, size);
  const cell = (size * 0.8 * cam.zoom) / d;
  // paint back-to-front along the view axis so nearer cells overdraw
  const order: number[] = [];
  for (let i = 0; i < occ.length; i++) {
    if (occ[i]) order.push(i);
  }
  const depth = (i: number): number => {
    const x = Math.floor(i / (d * d)) / d - 0.5;
    const z = (i % d) / d - 0.5;
    return -x * Math.sin(cam.yaw) + z * Math.cos(cam.yaw);
  };
  order.sort((a, b) => depth(a) - depth(b));
  for (const i of order) {
    const x = Math.floor(i / (d * d)) / d - 0.5;
    const y = (Math.floor(i / d) % d) / d - 0.5;
    const z = (i % d) / d - 0.5;
    const [px, py] = project([x, y, z], cam, size);
    const shade = Math.round(120 + 120 * (depth(i) + 0.5));
    ctx.fillStyle = `rgb(${shade}, ${shade}, ${Math.min(255, shade + 20)})`;
    ctx.fillRect(px, py - cell, cell, cell);
  }
}
