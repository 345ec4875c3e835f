import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, DecodeResponse, TapQueue } from "../src/client";

function okJson(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "content-type": "application/json" },
  });
}

interface Recorded {
  url: string;
  method: string;
  body: unknown;
}

/** In-memory decode service double with scriptable network failures. */
class FakeService {
  calls: Recorded[] = [];
  points: { x: number; y: number; t_ms: number }[] = [];
  failPlan: (attempt: number, url: string) => boolean = () => false;
  private attempts = 0;

  fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    this.attempts += 1;
    if (this.failPlan(this.attempts, url)) {
      throw new TypeError("network down");
    }
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ url, method, body });
    if (url.endsWith("/v1/session") && method === "POST") {
      return okJson({ session_id: "s1" });
    }
    if (url.includes("/point") && method === "POST") {
      this.points.push(body as { x: number; y: number; t_ms: number });
      return okJson(this.decodeBody());
    }
    if (url.includes("/point") && method === "DELETE") {
      if (this.points.length === 0) {
        return new Response(JSON.stringify({ detail: "empty" }), { status: 400 });
      }
      this.points.pop();
      return okJson(this.decodeBody());
    }
    throw new Error(`unexpected ${method} ${url}`);
  };

  private decodeBody(): DecodeResponse {
    return {
      text: this.points.map((p) => String.fromCharCode(97 + (p.x % 26))).join(""),
      provenance: this.points.map(() => "kept"),
      wpm: 0,
      latency_ms: 1,
    };
  }
}

function tap(x: number, t: number) {
  return { x, y: 0, t_ms: t };
}

describe("ApiClient", () => {
  it("creates sessions and pushes points", async () => {
    const svc = new FakeService();
    const client = new ApiClient("http://api", { fetchFn: svc.fetchFn, retryDelayMs: 1 });
    const sid = await client.createSession(100, 200);
    expect(sid).toBe("s1");
    const resp = await client.pushPoint(sid, tap(2, 0));
    expect(resp.text).toBe("c");
  });

  it("retries network failures and reports connection state", async () => {
    const svc = new FakeService();
    const transitions: boolean[] = [];
    svc.failPlan = (attempt) => attempt <= 2; // first two attempts die
    const client = new ApiClient("http://api", {
      fetchFn: svc.fetchFn,
      retryDelayMs: 1,
      onConnectionChange: (online) => transitions.push(online),
    });
    const sid = await client.createSession(1, 1);
    expect(sid).toBe("s1");
    expect(transitions).toEqual([false, true]);
  });

  it("does not retry protocol errors", async () => {
    const svc = new FakeService();
    const client = new ApiClient("http://api", { fetchFn: svc.fetchFn, retryDelayMs: 1 });
    const sid = await client.createSession(1, 1);
    await expect(client.popPoint(sid)).rejects.toBeInstanceOf(ApiError);
  });
});

describe("TapQueue ordering", () => {
  it("delivers rapid taps strictly in order", async () => {
    const svc = new FakeService();
    const client = new ApiClient("http://api", { fetchFn: svc.fetchFn, retryDelayMs: 1 });
    const sid = await client.createSession(1, 1);
    const responses: string[] = [];
    const queue = new TapQueue(client, sid, (r) => responses.push(r.text));
    for (let i = 0; i < 10; i++) queue.pushTap(tap(i, i * 10));
    await queue.flush();
    expect(svc.points.map((p) => p.x)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(responses.length).toBe(10);
    expect(responses[9]).toBe("abcdefghij");
  });

  it("preserves order and drops nothing across network outages", async () => {
    const svc = new FakeService();
    // every third attempt fails while "offline" window is active
    let offline = true;
    svc.failPlan = (attempt, url) => offline && url.includes("/point") && attempt % 2 === 0;
    const client = new ApiClient("http://api", { fetchFn: svc.fetchFn, retryDelayMs: 1 });
    const sid = await client.createSession(1, 1);
    const queue = new TapQueue(client, sid, () => undefined);
    for (let i = 0; i < 20; i++) queue.pushTap(tap(i, i * 10));
    setTimeout(() => {
      offline = false;
    }, 20);
    await queue.flush();
    expect(svc.points.map((p) => p.x)).toEqual([...Array(20).keys()]);
  });

  it("interleaves pushes and pops in submission order", async () => {
    const svc = new FakeService();
    const client = new ApiClient("http://api", { fetchFn: svc.fetchFn, retryDelayMs: 1 });
    const sid = await client.createSession(1, 1);
    const texts: string[] = [];
    const queue = new TapQueue(client, sid, (r) => texts.push(r.text));
    queue.pushTap(tap(0, 0));
    queue.pushTap(tap(1, 10));
    queue.popTap();
    queue.pushTap(tap(1, 20));
    await queue.flush();
    expect(texts).toEqual(["a", "ab", "a", "ab"]);
  });

  it("surfaces protocol errors without stalling the queue", async () => {
    const svc = new FakeService();
    const client = new ApiClient("http://api", { fetchFn: svc.fetchFn, retryDelayMs: 1 });
    const sid = await client.createSession(1, 1);
    const errors: unknown[] = [];
    const texts: string[] = [];
    const queue = new TapQueue(client, sid, (r) => texts.push(r.text), (e) => errors.push(e));
    queue.popTap(); // empty session: 400
    queue.pushTap(tap(0, 0));
    await queue.flush();
    expect(errors.length).toBe(1);
    expect(texts).toEqual(["a"]);
  });
});
