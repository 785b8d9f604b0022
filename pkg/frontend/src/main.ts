/** DOM wiring for the composer page. */

import { ApiError, ComposerApi } from "./api.js";
import { SessionController } from "./controller.js";
import { normalize, snapAngle } from "./ops.js";
import type { Camera } from "./render.js";
import { drawOccupancy, drawSkeleton, regionColor } from "./render.js";
import type { EditOpJson, PartitionJson, Vec3 } from "./types.js";

const SERVICE = (window as unknown as { BEASTFORGE_SERVICE?: string })
  .BEASTFORGE_SERVICE ?? "http://127.0.0.1:8787";
const CANVAS_SIZE = 520;

const api = new ComposerApi(SERVICE);
const controller = new SessionController(api);
const camera: Camera = { yaw: 0.6, pitch: 0.35, zoom: 1.0 };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function status(text: string, isError = false): void {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

function jointRegionLookup(): (index: number) => string | null {
  const preview = controller.state.preview;
  if (!preview) return () => null;
  // provenance is positional: the service concatenates parts in plan order,
  // so color by walking the plan's declared parts against joint counts
  const partitions = new Map<string, PartitionJson>();
  for (const entry of controller.state.assets) {
    partitions.set(entry.asset, entry.partition);
  }
  const plan = controller.state.plan;
  if (!plan) return () => null;
  const spans: Array<{ ref: string; count: number }> = [];
  for (const decl of plan.parts) {
    const partition = partitions.get(decl.asset);
    const region = partition?.regions.find(
      (r) => r.label.toLowerCase() === decl.region && r.instance === decl.instance,
    );
    const jointCount = region ? region.joints.length : 0;
    for (let c = 0; c < decl.copies; c++) {
      spans.push({ ref: `${decl.asset}/${decl.region}/${decl.instance}`, count: jointCount });
    }
  }
  return (index: number) => {
    let at = 0;
    for (const span of spans) {
      at += span.count;
      if (index < at) return span.ref;
    }
    return null;
  };
}

function redraw(): void {
  const preview = controller.state.preview;
  if (!preview) return;
  const skelCtx = el<HTMLCanvasElement>("skeleton").getContext("2d");
  const occCtx = el<HTMLCanvasElement>("occupancy").getContext("2d");
  if (!skelCtx || !occCtx) return;
  drawSkeleton(skelCtx, preview.skeleton, jointRegionLookup(),
    camera, CANVAS_SIZE, controller.state.selectedRegion);
  drawOccupancy(occCtx, preview, camera, CANVAS_SIZE);
  el<HTMLSpanElement>("revision").textContent = `rev ${preview.revision}`;
}

function renderRegionList(): void {
  const list = el<HTMLUListElement>("regions");
  list.innerHTML = "";
  if (controller.regionRefs().length === 0) {
    el<HTMLDivElement>("empty-hint").style.display = "block";
    return;
  }
  el<HTMLDivElement>("empty-hint").style.display = "none";
  for (const ref of controller.regionRefs()) {
    const [, label = "body", instance = "1"] = ref.split("/");
    const item = document.createElement("li");
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = regionColor(label, Number(instance));
    item.append(swatch, ` ${ref}`);
    item.onclick = () => {
      controller.select(controller.state.selectedRegion === ref ? null : ref);
      document.querySelectorAll("#regions li").forEach((n) =>
        n.classList.toggle("selected", n === item && controller.state.selectedRegion === ref));
      redraw();
    };
    list.appendChild(item);
  }
}

function readVec(id: string): Vec3 {
  const raw = el<HTMLInputElement>(id).value.split(",").map(Number);
  if (raw.length !== 3 || raw.some((v) => !Number.isFinite(v))) {
    throw new Error(`bad vector in #${id}`);
  }
  return [raw[0] ?? 0, raw[1] ?? 0, raw[2] ?? 0];
}

function buildOp(): EditOpJson {
  const target = controller.state.selectedRegion;
  if (!target) throw new Error("select a region first");
  const kind = el<HTMLSelectElement>("op-kind").value;
  if (kind === "rotate") {
    return {
      type: "rotate",
      target,
      axis: normalize(readVec("op-axis")),
      pivot: readVec("op-pivot"),
      angle_deg: el<HTMLInputElement>("op-snap").checked
        ? snapAngle(Number(el<HTMLInputElement>("op-angle").value))
        : Number(el<HTMLInputElement>("op-angle").value),
    };
  }
  if (kind === "translate") {
    return {
      type: "translate",
      target,
      dir: normalize(readVec("op-axis")),
      dist: Number(el<HTMLInputElement>("op-angle").value),
    };
  }
  return {
    type: "scale",
    target,
    factor: Number(el<HTMLInputElement>("op-angle").value),
    pivot: readVec("op-pivot"),
  };
}

async function guard(run: () => Promise<void>): Promise<void> {
  try {
    await run();
    status("ok");
  } catch (err) {
    if (err instanceof ApiError) {
      status(`${err.message}${err.violations.length ? ": " + err.violations.join("; ") : ""}`, true);
    } else {
      status(String(err), true);
    }
  }
}

function wire(): void {
  el<HTMLButtonElement>("load").onclick = () => guard(async () => {
    const names = el<HTMLInputElement>("fixtures").value
      .split(",").map((s) => s.trim()).filter(Boolean);
    if (!controller.state.sessionId) await controller.open();
    await controller.loadFixtures(names);
    renderRegionList();
  });

  el<HTMLButtonElement>("plan").onclick = () => guard(async () => {
    await controller.plan(el<HTMLInputElement>("request").value);
    redraw();
  });

  el<HTMLButtonElement>("apply").onclick = () => guard(async () => {
    const ok = await controller.applyOp(buildOp());
    if (!ok) {
      status(controller.state.pendingProblems.join("; "), true);
      return;
    }
    redraw();
  });

  el<HTMLButtonElement>("undo").onclick = () => guard(async () => {
    await controller.undo();
    redraw();
  });
  el<HTMLButtonElement>("redo").onclick = () => guard(async () => {
    await controller.redo();
    redraw();
  });

  el<HTMLButtonElement>("compose").onclick = () => guard(async () => {
    const out = await controller.compose();
    const link = el<HTMLAnchorElement>("artifact");
    link.href = `${SERVICE}${out.href}`;
    link.textContent = `composed latent ${out.artifact.slice(0, 12)}… `
      + `(${out.seam_voxels} seam voxels)`;
    link.style.display = "inline";
  });

  const styleButton = el<HTMLButtonElement>("style");
  styleButton.onclick = () => guard(async () => {
    const out = await controller.style(el<HTMLInputElement>("style-prompt").value);
    status(`styled artifact ${out.artifact.slice(0, 12)}…`);
  });
  // the style backend is optional; disable the control when it is absent
  void (async () => {
    try {
      if (!controller.state.sessionId) await controller.open();
      await controller.style("");
      styleButton.disabled = false;
    } catch (err) {
      if (err instanceof ApiError && err.status === 502) {
        styleButton.disabled = true;
        styleButton.title = "no image-editing backend configured "
          + "(MUSES_IMGEDIT_ENDPOINT / MUSES_GEN3D_ENDPOINT)";
      }
    }
  })();

  const canvas = el<HTMLCanvasElement>("skeleton");
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.onmousedown = (e) => { dragging = true; lastX = e.clientX; lastY = e.clientY; };
  window.onmouseup = () => { dragging = false; };
  window.onmousemove = (e) => {
    if (!dragging) return;
    camera.yaw += (e.clientX - lastX) * 0.01;
    camera.pitch += (e.clientY - lastY) * 0.01;
    lastX = e.clientX;
    lastY = e.clientY;
    redraw();
  };
  canvas.onwheel = (e) => {
    e.preventDefault();
    camera.zoom *= e.deltaY < 0 ? 1.1 : 0.9;
    redraw();
  };
}

wire();
status("ready; load fixtures to begin");
