/** Thin REST client for the composer service. */

import type {
  ClassifyEntryJson,
  ComposeResultJson,
  EditOpJson,
  PlanJson,
  PreviewJson,
  SkeletonJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly violations: string[] = [],
  ) {
    super(message);
  }
}

async function request<T>(url: string, method: string, body?: unknown): Promise<T> {
  const resp = await fetch(url, {
    method,
    headers: body === undefined ? undefined : { "Content-Type": "application/json" },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  const text = await resp.text();
  const payload = text ? JSON.parse(text) : {};
  if (!resp.ok) {
    throw new ApiError(resp.status, payload.error ?? resp.statusText,
      payload.violations ?? []);
  }
  return payload as T;
}

export class ComposerApi {
  constructor(readonly base: string) {}

  async createSession(): Promise<string> {
    const out = await request<{ id: string }>(`${this.base}/sessions`, "POST");
    return out.id;
  }

  addFixture(sid: string, fixture: string): Promise<{ asset: string; revision: number }> {
    return request(`${this.base}/sessions/${sid}/assets`, "POST", { fixture });
  }

  classify(sid: string): Promise<{ assets: ClassifyEntryJson[]; revision: number }> {
    return request(`${this.base}/sessions/${sid}/classify`, "POST");
  }

  planRequest(sid: string, text: string): Promise<{ plan: PlanJson; revision: number }> {
    return request(`${this.base}/sessions/${sid}/plan`, "POST", { request: text });
  }

  planExplicit(sid: string, plan: PlanJson): Promise<{ plan: PlanJson; revision: number }> {
    return request(`${this.base}/sessions/${sid}/plan`, "POST", { plan });
  }

  applyOp(sid: string, op: EditOpJson): Promise<{ revision: number; skeleton: SkeletonJson }> {
    return request(`${this.base}/sessions/${sid}/ops`, "POST", op);
  }

  preview(sid: string): Promise<PreviewJson> {
    return request(`${this.base}/sessions/${sid}/preview`, "GET");
  }

  compose(sid: string): Promise<ComposeResultJson> {
    return request(`${this.base}/sessions/${sid}/compose`, "POST");
  }

  style(sid: string, prompt: string): Promise<{ artifact: string; href: string }> {
    return request(`${this.base}/sessions/${sid}/style`, "POST", {
      style_prompt: prompt,
    });
  }

  async artifact(href: string): Promise<ArrayBuffer> {
    const resp = await fetch(`${this.base}${href}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, `artifact fetch failed (${resp.status})`);
    }
    return resp.arrayBuffer();
  }
}
