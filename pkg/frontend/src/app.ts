/**
 * Application wiring: a blank full-screen touch surface streaming taps to
 * the decode service.
 *
 * One-finger tap types; a two-finger tap removes the last point (the
 * service re-decodes the remainder). Taps are sent in CSS viewport pixels
 * and the session is created with the viewport size as the screen
 * dimensions, so device-pixel-ratio handling never leaves the browser.
 */

import { ApiClient, DecodeResponse, TapQueue } from "./client.js";
import {
  clearHeatmap,
  renderBanner,
  renderDecoded,
  renderHeatmap,
  renderLiveCer,
  renderWpm,
} from "./view.js";

interface AppState {
  client: ApiClient;
  sessionId: string;
  queue: TapQueue;
  startedAt: number;
  heatmapOn: boolean;
  heatmapStep: number;
  prescribed: string | null;
  lastResponse: DecodeResponse | null;
  activePointers: Set<number>;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function refreshHeatmap(state: AppState, canvas: HTMLCanvasElement): Promise<void> {
  if (!state.heatmapOn) return;
  try {
    const payload = await state.client.heatmap(state.sessionId, state.heatmapStep);
    if (state.heatmapOn) renderHeatmap(canvas, payload);
  } catch {
    state.heatmapOn = false;
    clearHeatmap(canvas);
    el<HTMLElement>("banner").textContent = "heatmap unavailable";
  }
}

export async function startApp(): Promise<void> {
  const surface = el<HTMLElement>("surface");
  const decodedPane = el<HTMLElement>("decoded");
  const wpmEl = el<HTMLElement>("wpm");
  const bannerEl = el<HTMLElement>("banner");
  const cerEl = el<HTMLElement>("cer");
  const overlay = el<HTMLCanvasElement>("overlay");
  const heatmapBtn = el<HTMLButtonElement>("heatmap-toggle");
  const phraseInput = el<HTMLInputElement>("phrase");

  const probe = new ApiClient("");
  let apiBase = "";
  try {
    apiBase = (await probe.uiConfig()).api_base;
  } catch {
    apiBase = ""; // same-origin deployment
  }

  const client = new ApiClient(apiBase, {
    onConnectionChange: () => syncBanner(),
  });
  const screenW = Math.round(window.innerWidth);
  const screenH = Math.round(window.innerHeight);
  const sessionId = await client.createSession(screenW, screenH);

  const state: AppState = {
    client,
    sessionId,
    queue: undefined as unknown as TapQueue,
    startedAt: performance.now(),
    heatmapOn: false,
    heatmapStep: 40,
    prescribed: null,
    lastResponse: null,
    activePointers: new Set(),
  };

  function syncBanner() {
    renderBanner(bannerEl, client.isOnline, state.queue ? state.queue.pending : 0);
  }

  function onResponse(resp: DecodeResponse) {
    state.lastResponse = resp;
    renderDecoded(decodedPane, resp);
    renderWpm(wpmEl, resp);
    renderLiveCer(cerEl, resp.text, state.prescribed);
    syncBanner();
    void refreshHeatmap(state, overlay);
  }

  state.queue = new TapQueue(client, sessionId, onResponse, () => syncBanner());

  surface.addEventListener("pointerdown", (ev: PointerEvent) => {
    state.activePointers.add(ev.pointerId);
    if (state.activePointers.size === 2) {
      state.queue.popTap(); // two-finger tap: remove last point
      return;
    }
    if (state.activePointers.size > 2) return;
    state.queue.pushTap({
      x: ev.clientX,
      y: ev.clientY,
      t_ms: Math.round(performance.now() - state.startedAt),
    });
    syncBanner();
  });
  surface.addEventListener("pointerup", (ev: PointerEvent) => {
    state.activePointers.delete(ev.pointerId);
  });
  surface.addEventListener("pointercancel", (ev: PointerEvent) => {
    state.activePointers.delete(ev.pointerId);
  });

  heatmapBtn.addEventListener("click", () => {
    state.heatmapOn = !state.heatmapOn;
    heatmapBtn.textContent = state.heatmapOn ? "heatmap: on" : "heatmap: off";
    if (state.heatmapOn) {
      void refreshHeatmap(state, overlay);
    } else {
      clearHeatmap(overlay);
    }
  });

  phraseInput.addEventListener("change", () => {
    state.prescribed = phraseInput.value.trim().toLowerCase() || null;
    if (state.lastResponse) renderLiveCer(cerEl, state.lastResponse.text, state.prescribed);
  });

  syncBanner();
}

declare global {
  interface Window {
    imkStartApp: () => Promise<void>;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.imkStartApp = startApp;
  if (document.readyState !== "loading") {
    void startApp();
  } else {
    document.addEventListener("DOMContentLoaded", () => void startApp());
  }
}
