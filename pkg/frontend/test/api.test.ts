import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, replayTransport, stableStringify, type Transport } from "../src/api";

describe("stableStringify", () => {
  it("is key-order independent", () => {
    expect(stableStringify({ b: 1, a: [2, { d: 3, c: 4 }] })).toBe(stableStringify({ a: [2, { c: 4, d: 3 }], b: 1 }));
  });

  it("matches plain JSON for scalars and arrays", () => {
    expect(stableStringify([1, "x", null])).toBe('[1,"x",null]');
  });
});

describe("ApiClient", () => {
  it("parses JSON responses and records the exchange log", async () => {
    const transport: Transport = async () => ({ status: 200, text: '{"session_id":"s1","parts":[]}' });
    const client = new ApiClient(transport);
    const resp = await client.reconstruct({ points: [[0, 0, 0]] });
    expect(resp.session_id).toBe("s1");
    expect(client.log).toHaveLength(1);
    expect(client.log[0]).toMatchObject({ method: "POST", path: "/api/reconstruct", status: 200 });
  });

  it("throws ApiError with status and server detail", async () => {
    const transport: Transport = async () => ({ status: 422, text: '{"detail":"bad points"}' });
    const client = new ApiClient(transport);
    await expect(client.reconstruct({ points: [] })).rejects.toThrowError(ApiError);
    await expect(client.reconstruct({ points: [] })).rejects.toThrow(/422/);
  });

  it("builds nearest queries with encoded refs", async () => {
    let seen = "";
    const transport: Transport = async (_m, path) => {
      seen = path;
      return { status: 200, text: '{"candidates":[],"truncated":false}' };
    };
    await new ApiClient(transport).nearest("sid", 3, 7, ["a b", "c"]);
    expect(seen).toBe("/api/parts/nearest?session=sid&part=3&k=7&refs=a%20b%2Cc");
  });

  it("replay transport rejects unrecorded requests", async () => {
    const transport = replayTransport([
      { method: "GET", path: "/api/db/index", body: null, status: 200, text: "", response: '{"shapes":[],"parts":[]}' } as never,
    ]);
    const client = new ApiClient(transport);
    await expect(client.dbIndex()).resolves.toBeTruthy();
    await expect(client.dbPartMesh("x")).rejects.toThrow(/no recorded exchange/);
  });
});
