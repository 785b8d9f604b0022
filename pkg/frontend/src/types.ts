/** Wire types shared with the composer service. */

export type Vec3 = [number, number, number];

export interface SkeletonJson {
  joints: Vec3[];
  bones: [number, number][];
  root: number;
  names: string[] | null;
}

export interface RegionJson {
  label: string;
  instance: number;
  joints: number[];
  bones: number[];
}

export interface PartitionJson {
  regions: RegionJson[];
  begin: number;
  trunk: number | null;
}

export interface PartDeclJson {
  asset: string;
  region: string;
  instance: number;
  copies: number;
  symmetric: boolean;
}

export interface RotateOpJson {
  type: "rotate";
  target: string;
  axis: Vec3;
  pivot: Vec3;
  angle_deg: number;
}

export interface TranslateOpJson {
  type: "translate";
  target: string;
  dir: Vec3;
  dist: number;
}

export interface ScaleOpJson {
  type: "scale";
  target: string;
  factor: number;
  pivot: Vec3;
}

export type EditOpJson = RotateOpJson | TranslateOpJson | ScaleOpJson;

export interface AttachmentJson {
  from: string;
  to: string;
}

export interface PlanJson {
  parts: PartDeclJson[];
  ops: EditOpJson[];
  attach: AttachmentJson[];
}

export interface PreviewJson {
  skeleton: SkeletonJson;
  resolution: number;
  occupancy_rle: number[];
  revision: number;
}

export interface ComposeResultJson {
  artifact: string;
  href: string;
  seam_voxels: number;
  revision: number;
}

export interface ClassifyEntryJson {
  asset: string;
  partition: PartitionJson;
}
