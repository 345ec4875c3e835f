/**
 * DOM rendering for the typing surface.
 *
 * The decoded pane is fully re-rendered on every response because the
 * service may revise earlier characters; positions the semantic stage
 * filled from a mask token get their own style. The WPM readout displays
 * the service's value verbatim (single source of truth).
 */

import type { DecodeResponse, HeatmapPayload } from "./client.js";
import { cerPercent } from "./metrics.js";

export interface ViewElements {
  decoded: HTMLElement;
  wpm: HTMLElement;
  banner: HTMLElement;
  cer: HTMLElement;
  overlay: HTMLCanvasElement;
}

export function renderDecoded(pane: HTMLElement, resp: DecodeResponse): void {
  pane.textContent = "";
  for (let i = 0; i < resp.text.length; i++) {
    const span = pane.ownerDocument.createElement("span");
    span.textContent = resp.text[i] === " " ? " " : resp.text[i];
    span.className = resp.provenance[i] === "filled" ? "char filled" : "char kept";
    pane.appendChild(span);
  }
}

export function renderWpm(el: HTMLElement, resp: DecodeResponse): void {
  el.textContent = `${resp.wpm.toFixed(1)} wpm`;
}

export function renderBanner(el: HTMLElement, online: boolean, pending: number): void {
  if (online && pending === 0) {
    el.textContent = "";
    el.classList.remove("visible");
  } else if (!online) {
    el.textContent = `offline: ${pending} tap${pending === 1 ? "" : "s"} queued, retrying`;
    el.classList.add("visible");
  } else {
    el.textContent = `syncing ${pending}`;
    el.classList.add("visible");
  }
}

export function renderLiveCer(el: HTMLElement, decoded: string, prescribed: string | null): void {
  if (!prescribed) {
    el.textContent = "";
    return;
  }
  el.textContent = `CER ${cerPercent(decoded, prescribed).toFixed(1)}%`;
}

const PALETTE = [
  "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c",
  "#dc7ec0", "#797979", "#d5bb67", "#82c6e2", "#2f4b7c", "#ffa600",
];

function cellColor(ch: string): string {
  if (ch === " ") return "#e8e8e8";
  let hash = 0;
  for (const c of ch) hash = (hash * 31 + c.charCodeAt(0)) | 0;
  return PALETTE[Math.abs(hash) % PALETTE.length];
}

/** Translucent per-cell character regions over the typing surface. */
export function renderHeatmap(canvas: HTMLCanvasElement, payload: HeatmapPayload): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  canvas.width = payload.w;
  canvas.height = payload.h;
  ctx.clearRect(0, 0, payload.w, payload.h);
  ctx.globalAlpha = 0.35;
  const rows = payload.chars.length;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < payload.chars[r].length; c++) {
      ctx.fillStyle = cellColor(payload.chars[r][c]);
      ctx.fillRect(c * payload.step, r * payload.step, payload.step, payload.step);
    }
  }
  ctx.globalAlpha = 0.9;
  ctx.fillStyle = "#111";
  ctx.font = `${Math.max(10, payload.step * 0.4)}px system-ui, sans-serif`;
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < payload.chars[r].length; c++) {
      const ch = payload.chars[r][c];
      if (ch !== " ") {
        ctx.fillText(ch, (c + 0.5) * payload.step, (r + 0.5) * payload.step);
      }
    }
  }
}

export function clearHeatmap(canvas: HTMLCanvasElement): void {
  const ctx = canvas.getContext("2d");
  if (ctx) ctx.clearRect(0, 0, canvas.width, canvas.height);
}
