/** Contract tests: the UI is a pure function of API payloads.
 *
 * Recorded payloads replay through the render functions; colors must come
 * verbatim from the payload's color field — never re-derived from metrics.
 */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import type {
  AlertsResponse,
  HeatmapCell,
  Predictions,
  Recommendation,
  StudentRecordDto,
  TalentEntry,
  WordCloudEntry,
} from "../src/types.js";
import {
  LOW_SUPPORT,
  alertBoard,
  drilldown,
  heatmap,
  recommendations,
  sparkline,
  talentList,
  wordCloud,
} from "../src/views.js";

function fixture<T>(name: string): T {
  const path = fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));
  return JSON.parse(readFileSync(path, "utf-8")) as T;
}

const alertsPayload = fixture<AlertsResponse>("alerts.json");

describe("alert board", () => {
  it("groups by the payload's color field with counts", () => {
    const html = alertBoard(alertsPayload);
    for (const color of ["red", "yellow", "green"] as const) {
      const count = alertsPayload.alerts.filter((a) => a.color === color).length;
      expect(html).toContain(`<h3>${color} <span class="count">(${count})</span></h3>`);
    }
  });

  it("preserves server order within each group", () => {
    const html = alertBoard(alertsPayload);
    const yellows = alertsPayload.alerts.filter((a) => a.color === "yellow");
    let cursor = -1;
    for (const alert of yellows) {
      const idx = html.indexOf(`data-token="${alert.token}"\n          data-dimension="${alert.dimension}"`);
      expect(idx).toBeGreaterThan(cursor);
      cursor = idx;
    }
  });

  it("never derives color from the metric", () => {
    // Wildly inconsistent metric/color pairs must render the payload color:
    // a would-be-red metric stays green because the server said green.
    const payload: AlertsResponse = {
      alerts: [
        { token: "a".repeat(64), dimension: "inschool:math", color: "green",
          metric: -50.0, config_snapshot: 1, generated_at: "t" },
        { token: "b".repeat(64), dimension: "inschool:math", color: "red",
          metric: +20.0, config_snapshot: 1, generated_at: "t" },
      ],
      warnings: [],
    };
    const html = alertBoard(payload);
    expect(html).toContain(`<h3>green <span class="count">(1)</span></h3>`);
    expect(html).toContain(`<h3>red <span class="count">(1)</span></h3>`);
    const greenRow = html.slice(html.indexOf("a".repeat(64)) - 200, html.indexOf("a".repeat(64)));
    expect(greenRow).toContain("alert-green");
    expect(greenRow).not.toContain("alert-red");
  });

  it("shows an explicit empty state", () => {
    expect(alertBoard({ alerts: [], warnings: [] })).toContain("No alerts");
  });

  it("renders warnings as non-blocking banners", () => {
    const html = alertBoard({ alerts: [], warnings: ["sch-0: no trained behavior model"] });
    expect(html).toContain("banner warning");
    expect(html).toContain("no trained behavior model");
  });
});

describe("drill-down", () => {
  const record = fixture<StudentRecordDto>("record.json");
  const predictions = fixture<Predictions>("predictions.json");

  it("renders sparkline, predictions and behavior indicators from payloads", () => {
    const html = drilldown(record, predictions, alertsPayload.alerts.slice(0, 3));
    expect(html).toContain("sparkline");
    expect(html).toContain("disciplinary actions");
    const anySubject = Object.keys(predictions.scores)[0]!;
    expect(html).toContain(predictions.scores[anySubject]!.toFixed(1));
  });

  it("prints the payload's predicted values verbatim (no recomputation)", () => {
    const doctored: Predictions = { ...predictions, scores: { math: 42.125 }, exam_grades: {} };
    const html = drilldown(record, doctored, []);
    expect(html).toContain("42.1");
  });

  it("sparkline swallows empty histories", () => {
    expect(sparkline([])).toContain("<svg");
  });
});

describe("word cloud", () => {
  const entries = fixture<WordCloudEntry[]>("wordcloud.json");

  it("sizes terms by count", () => {
    const html = wordCloud(entries);
    const top = entries[0]!;
    expect(html).toContain(top.term);
    expect(html).toContain("font-size:31px"); // max count gets the max size
  });

  it("single term renders alone", () => {
    const html = wordCloud([{ term: "anxiety", count: 3 }]);
    expect(html).toContain("anxiety");
    expect((html.match(/class="term"/g) ?? []).length).toBe(1);
  });
});

describe("heatmap", () => {
  const cells = fixture<HeatmapCell[]>("heatmap.json");

  it("renders undefined phi as neutral cells", () => {
    const withNull: HeatmapCell[] = [
      { sen_type: "adhd", activity_category: "sports", phi: null, lift: null, support: 9 },
    ];
    expect(heatmap(withNull)).toContain("cell undefined");
  });

  it("greys out low-support cells even when phi is defined", () => {
    const thin: HeatmapCell[] = [
      { sen_type: "adhd", activity_category: "arts", phi: 0.9, lift: 2.0, support: LOW_SUPPORT - 1 },
    ];
    expect(heatmap(thin)).toContain("cell undefined");
  });

  it("colored cells show the payload's phi verbatim", () => {
    const strong = cells.filter((c) => c.phi !== null && c.support >= LOW_SUPPORT);
    const html = heatmap(cells);
    for (const cell of strong.slice(0, 5)) {
      expect(html).toContain(cell.phi!.toFixed(2));
    }
  });
});

describe("talents and recommendations", () => {
  it("talent entries list their evidence trail", () => {
    const entries = fixture<TalentEntry[]>("talents.json");
    const html = talentList("sports", entries);
    if (entries.length > 0) {
      expect(html).toContain(entries[0]!.score.toFixed(1));
      expect(html).toContain("evidence");
    }
  });

  it("cross-school recommendations carry the badge", () => {
    const recs: Recommendation[] = [
      { elective_id: "el-20", score: 0.9, cross_school: true, cold_start: false },
      { elective_id: "el-01", score: 0.8, cross_school: false, cold_start: false },
    ];
    const html = recommendations(recs);
    const cross = html.slice(html.indexOf("el-20"), html.indexOf("el-01"));
    expect(cross).toContain("cross-school");
    expect(html.slice(html.indexOf("el-01"))).not.toContain("cross-school");
  });

  it("cold-start recommendations are labeled", () => {
    const recs = fixture<Recommendation[]>("recommendations.json");
    const html = recommendations(recs.map((r) => ({ ...r, cold_start: true })));
    expect(html).toContain("cold start");
  });
});
