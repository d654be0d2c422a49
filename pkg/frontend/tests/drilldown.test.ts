/** Acceptance (dashboard): level-1 drill-down — the leaf counts selected for a
 * root must sum to the parent slice's count, comparing two API responses.
 * Runs entirely against the fixture server; no model endpoint involved. */
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { drillItems } from "../src/viewmodel";
import { startFixtureServer, type FixtureServer } from "./fixture-server";

let server: FixtureServer;
let client: ApiClient;

beforeAll(async () => {
  server = await startFixtureServer();
  client = new ApiClient(server.url);
});

afterAll(async () => {
  await server.close();
});

describe("drill-down consistency", () => {
  it("leaf sums equal the parent slice for every level-1 root", async () => {
    const level1 = await client.distribution("1");
    const leaf = await client.distribution("leaf");
    expect(level1.items.length).toBeGreaterThan(0);
    for (const parent of level1.items) {
      const children = drillItems(leaf, parent.label);
      const childSum = children.reduce((acc, item) => acc + item.count, 0);
      expect(childSum).toBe(parent.count);
    }
  });

  it("holds under a team filter too", async () => {
    const level1 = await client.distribution("1", { team: "T-A" });
    const leaf = await client.distribution("leaf", { team: "T-A" });
    for (const parent of level1.items) {
      const childSum = drillItems(leaf, parent.label).reduce((a, i) => a + i.count, 0);
      expect(childSum).toBe(parent.count);
    }
  });

  it("the Other slice is present at both levels", async () => {
    const level1 = await client.distribution("1");
    const leaf = await client.distribution("leaf");
    expect(level1.items.some((i) => i.label === "Other")).toBe(true);
    expect(leaf.items.some((i) => i.label === "Other")).toBe(true);
  });
});
