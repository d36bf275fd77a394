/** Live acceptance: drives the dashboard's own data layer against a running
 * service (set SCHOOLPULSE_API; see run_live_tests.sh).
 *
 * Moving the in-school red cutoff from -10 to -6 must recolor exactly the
 * students whose deltas lie in (-10, -6], as verified against a direct API
 * query of the same feed.
 */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { violations, type ConstraintSchema } from "../src/thresholds.js";
import { DEFAULT_THRESHOLDS, type AlertDto } from "../src/types.js";
import { alertBoard } from "../src/views.js";

const API = process.env.SCHOOLPULSE_API;
const TEACHER = "acceptance-11";

const schema: ConstraintSchema = JSON.parse(
  readFileSync(fileURLToPath(new URL("../../schema/alert_config_constraints.json", import.meta.url)), "utf-8"),
);

function key(a: AlertDto): string {
  return `${a.token}|${a.dimension}`;
}

describe.skipIf(!API)("threshold feedback loop against the live service", () => {
  it("recolors exactly the deltas in (-10, -6] when red moves -10 -> -6", async () => {
    const api = new ApiClient(API!);

    const base = { ...DEFAULT_THRESHOLDS, teacher_id: TEACHER, inschool_red_cutoff: -10 };
    expect(violations(base, schema)).toEqual([]); // the form would allow it
    await api.updateThresholds(base);
    const before = await api.classAlerts("all", TEACHER);

    const inschoolBefore = before.alerts.filter((a) => a.dimension.startsWith("inschool:"));
    const expectedRecolor = new Set(
      inschoolBefore.filter((a) => a.metric > -10 && a.metric <= -6).map(key),
    );
    expect(expectedRecolor.size).toBeGreaterThan(0); // the band is populated
    for (const a of inschoolBefore) {
      if (expectedRecolor.has(key(a))) expect(a.color).toBe("yellow");
    }

    const tightened = { ...base, inschool_red_cutoff: -6 };
    expect(violations(tightened, schema)).toEqual([]);
    const { snapshot } = await api.updateThresholds(tightened);
    const after = await api.classAlerts("all", TEACHER);

    const beforeByKey = new Map(before.alerts.map((a) => [key(a), a]));
    const recolored = new Set<string>();
    for (const a of after.alerts) {
      const prev = beforeByKey.get(key(a));
      expect(prev).toBeDefined();
      expect(a.metric).toBe(prev!.metric); // metrics are data, not thresholds
      if (a.dimension.startsWith("inschool:")) {
        expect(a.config_snapshot).toBe(snapshot);
        if (a.color !== prev!.color) {
          expect(prev!.color).toBe("yellow");
          expect(a.color).toBe("red");
          recolored.add(key(a));
        }
      } else {
        expect(a.color).toBe(prev!.color); // other dimensions untouched
      }
    }
    expect(recolored).toEqual(expectedRecolor);

    // and the board renders the server's colors verbatim on both sides
    const boardBefore = alertBoard(before);
    const boardAfter = alertBoard(after);
    const redsBefore = before.alerts.filter((a) => a.color === "red").length;
    const redsAfter = after.alerts.filter((a) => a.color === "red").length;
    expect(boardBefore).toContain(`<h3>red <span class="count">(${redsBefore})</span></h3>`);
    expect(boardAfter).toContain(`<h3>red <span class="count">(${redsAfter})</span></h3>`);
    expect(redsAfter).toBe(redsBefore + expectedRecolor.size);
  }, 60_000);

  it("server rejects what the form would refuse to submit", async () => {
    const api = new ApiClient(API!);
    const broken = { ...DEFAULT_THRESHOLDS, teacher_id: TEACHER, inschool_red_cutoff: -1 };
    expect(violations(broken, schema).length).toBeGreaterThan(0);
    await expect(api.updateThresholds(broken)).rejects.toMatchObject({ status: 400 });
  });
});
