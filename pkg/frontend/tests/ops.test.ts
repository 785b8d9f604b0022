import { describe, expect, it } from "vitest";

import { inverseOp, normalize, snapAngle, validateOp } from "../src/ops.js";
import { decodeOccupancyRle, project, regionColor } from "../src/render.js";
import type { EditOpJson } from "../src/types.js";

describe("op validation", () => {
  it("accepts well-formed ops", () => {
    const ops: EditOpJson[] = [
      { type: "rotate", target: "a0/head/1", axis: [0, 1, 0], pivot: [0, 0, 0], angle_deg: 90 },
      { type: "translate", target: "a0/head/1", dir: [1, 0, 0], dist: 0.2 },
      { type: "scale", target: "a0/head/1", factor: 1.5, pivot: [0, 0, 0] },
    ];
    for (const op of ops) {
      expect(validateOp(op)).toEqual([]);
    }
  });

  it("rejects a zero scale client-side", () => {
    expect(validateOp({ type: "scale", target: "x", factor: 0, pivot: [0, 0, 0] }))
      .toContain("scale factor must be positive");
  });

  it("rejects non-unit axes and non-finite angles", () => {
    expect(validateOp({ type: "rotate", target: "x", axis: [0, 2, 0], pivot: [0, 0, 0], angle_deg: 10 }).length).toBe(1);
    expect(validateOp({ type: "rotate", target: "x", axis: [0, 1, 0], pivot: [0, 0, 0], angle_deg: Infinity }).length).toBe(1);
    expect(validateOp({ type: "translate", target: "x", dir: [0.5, 0, 0], dist: 1 }).length).toBe(1);
  });
});

describe("inverse ops", () => {
  it("negates rotation, negates distance, inverts scale", () => {
    expect(inverseOp({ type: "rotate", target: "t", axis: [0, 1, 0], pivot: [0, 0, 0], angle_deg: 35 }))
      .toMatchObject({ angle_deg: -35 });
    expect(inverseOp({ type: "translate", target: "t", dir: [1, 0, 0], dist: 0.4 }))
      .toMatchObject({ dist: -0.4 });
    expect(inverseOp({ type: "scale", target: "t", factor: 4, pivot: [0, 0, 0] }))
      .toMatchObject({ factor: 0.25 });
  });
});

describe("helpers", () => {
  it("normalize produces unit vectors and rejects zero", () => {
    const v = normalize([3, 0, 4]);
    expect(Math.hypot(...v)).toBeCloseTo(1, 12);
    expect(() => normalize([0, 0, 0])).toThrow();
  });

  it("snapAngle snaps to 5-degree increments by default", () => {
    expect(snapAngle(87.4)).toBe(85);
    expect(snapAngle(88)).toBe(90);
    expect(snapAngle(12.2, 0)).toBe(12.2);
  });

  it("region colors are stable per label", () => {
    expect(regionColor("Leg", 1)).toBe(regionColor("leg", 1));
    expect(regionColor("wing", 1)).not.toBe(regionColor("leg", 1));
  });
});

describe("occupancy RLE", () => {
  it("decodes alternating runs starting with zeros", () => {
    const d = 2;
    const occ = decodeOccupancyRle([3, 2, 3], d);
    expect([...occ]).toEqual([0, 0, 0, 1, 1, 0, 0, 0]);
  });

  it("rejects truncated encodings", () => {
    expect(() => decodeOccupancyRle([3], 2)).toThrow();
  });
});

describe("projection", () => {
  it("keeps the origin at the canvas center", () => {
    const [x, y] = project([0, 0, 0], { yaw: 0.4, pitch: 0.2, zoom: 1 }, 100);
    expect(x).toBeCloseTo(50, 9);
    expect(y).toBeCloseTo(50, 9);
  });

  it("maps +y upward on screen", () => {
    const [, y] = project([0, 0.3, 0], { yaw: 0, pitch: 0, zoom: 1 }, 100);
    expect(y).toBeLessThan(50);
  });
});
