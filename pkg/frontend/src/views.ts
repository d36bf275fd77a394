/** Pure render functions: API payload in, HTML string out.
 *
 * Contract: no analytic logic lives here. Alert colors are read from the
 * payload's `color` field and never re-derived from metrics; scores and
 * grades are printed, not computed. The contract tests replay recorded
 * payloads against these functions.
 */

import type {
  AlertDto,
  AlertsResponse,
  HeatmapCell,
  Predictions,
  Recommendation,
  StudentRecordDto,
  TalentEntry,
  WordCloudEntry,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

const GROUP_ORDER = ["red", "yellow", "green"] as const;

export function alertBoard(payload: AlertsResponse): string {
  const groups: Record<string, AlertDto[]> = { red: [], yellow: [], green: [] };
  for (const alert of payload.alerts) {
    // server order is preserved within each group: worst first
    (groups[alert.color] ?? []).push(alert);
  }
  const sections = GROUP_ORDER.map((color) => {
    const items = groups[color] ?? [];
    const rows = items
      .map(
        (a) => `<tr class="alert alert-${a.color}" data-token="${escapeHtml(a.token)}"
          data-dimension="${escapeHtml(a.dimension)}">
          <td class="dot ${a.color}"></td>
          <td class="token">${escapeHtml(a.token.slice(0, 10))}…</td>
          <td>${escapeHtml(a.dimension)}</td>
          <td class="metric">${a.metric.toFixed(2)}</td>
        </tr>`,
      )
      .join("");
    return `<section class="group group-${color}">
      <h3>${color} <span class="count">(${items.length})</span></h3>
      <table><tbody>${rows}</tbody></table>
    </section>`;
  });
  const warnings = payload.warnings
    .map((w) => `<div class="banner warning">${escapeHtml(w)}</div>`)
    .join("");
  const empty =
    payload.alerts.length === 0 ? `<div class="empty">No alerts for this class.</div>` : "";
  return `<div class="alert-board">${warnings}${empty}${sections.join("")}</div>`;
}

export function sparkline(scores: { year: number; term: number; score: number }[]): string {
  const recent = [...scores]
    .sort((a, b) => (a.year - b.year) || (a.term - b.term))
    .slice(-8);
  if (recent.length === 0) return `<svg class="sparkline" width="120" height="30"></svg>`;
  const points = recent
    .map((s, i) => {
      const x = recent.length === 1 ? 60 : (i / (recent.length - 1)) * 110 + 5;
      const y = 28 - (s.score / 100) * 26;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  return `<svg class="sparkline" width="120" height="30" viewBox="0 0 120 30">
    <polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="${points}"/>
  </svg>`;
}

export function drilldown(
  record: StudentRecordDto,
  predictions: Predictions,
  alerts: AlertDto[],
): string {
  const bySubject = new Map<string, { year: number; term: number; score: number }[]>();
  for (const s of record.scores.filter((s) => s.term !== 9)) {
    const list = bySubject.get(s.subject) ?? [];
    list.push(s);
    bySubject.set(s.subject, list);
  }
  const subjectRows = [...bySubject.keys()].sort().map((subject) => {
    const predicted = predictions.scores[subject];
    const grade = predictions.exam_grades[subject];
    const target = record.target_grades[subject];
    return `<tr>
      <td>${escapeHtml(subject)}</td>
      <td>${sparkline(bySubject.get(subject) ?? [])}</td>
      <td>${predicted === undefined ? "—" : predicted.toFixed(1)}</td>
      <td>${grade === undefined ? "—" : grade}${target === undefined ? "" : ` / target ${target}`}</td>
    </tr>`;
  });

  const tally = (kind: string) => record.behavior.filter((b) => b.kind === kind).length;
  const indicators = `<ul class="indicators">
    <li>attendance events: ${tally("attendance")}</li>
    <li>absences: ${tally("absence")}</li>
    <li>homework submitted: ${tally("homework_submitted")}</li>
    <li>homework missed: ${tally("homework_missed")}</li>
    <li>disciplinary actions: ${tally("punishment")}</li>
    <li>awards: ${tally("award")}</li>
  </ul>`;

  const alertRows = alerts
    .map(
      (a) => `<li class="alert-${a.color}"><span class="dot ${a.color}"></span>
        ${escapeHtml(a.dimension)}: ${a.metric.toFixed(2)}</li>`,
    )
    .join("");
  const risk =
    predictions.behavior_risk === null ? "—" : predictions.behavior_risk.toFixed(3);
  return `<div class="drilldown" data-token="${escapeHtml(record.token)}">
    <h3>Student ${escapeHtml(record.token.slice(0, 10))}…</h3>
    <p>behavior risk: ${risk}</p>
    <table><thead><tr><th>subject</th><th>recent terms</th><th>predicted</th><th>exam band</th></tr></thead>
    <tbody>${subjectRows.join("")}</tbody></table>
    ${indicators}
    <ul class="student-alerts">${alertRows}</ul>
  </div>`;
}

export function wordCloud(entries: WordCloudEntry[]): string {
  if (entries.length === 0) return `<div class="wordcloud empty">No IEP narratives.</div>`;
  const top = Math.max(...entries.map((e) => e.count));
  const spans = entries.map((e) => {
    const size = 11 + Math.round((e.count / top) * 20);
    return `<span class="term" style="font-size:${size}px" title="${e.count}">
      ${escapeHtml(e.term)}</span>`;
  });
  return `<div class="wordcloud">${spans.join(" ")}</div>`;
}

export const LOW_SUPPORT = 5;

export function heatmap(cells: HeatmapCell[]): string {
  const senTypes = [...new Set(cells.map((c) => c.sen_type))].sort();
  const categories = [...new Set(cells.map((c) => c.activity_category))].sort();
  const byKey = new Map(cells.map((c) => [`${c.sen_type}|${c.activity_category}`, c]));
  const header = categories.map((c) => `<th>${escapeHtml(c)}</th>`).join("");
  const rows = senTypes.map((sen) => {
    const tds = categories.map((cat) => {
      const cell = byKey.get(`${sen}|${cat}`);
      if (!cell || cell.phi === null || cell.support < LOW_SUPPORT) {
        // undefined or thin evidence renders neutral grey
        return `<td class="cell undefined" title="support ${cell?.support ?? 0}"></td>`;
      }
      // phi in [-1,1] -> red/blue alpha; purely presentational
      const alpha = Math.min(1, Math.abs(cell.phi)).toFixed(2);
      const base = cell.phi >= 0 ? "214,39,40" : "31,119,180";
      return `<td class="cell" style="background:rgba(${base},${alpha})"
        title="phi ${cell.phi.toFixed(3)}, support ${cell.support}">${cell.phi.toFixed(2)}</td>`;
    });
    return `<tr><th>${escapeHtml(sen)}</th>${tds.join("")}</tr>`;
  });
  return `<table class="heatmap"><thead><tr><th></th>${header}</tr></thead>
    <tbody>${rows.join("")}</tbody></table>`;
}

export function talentList(category: string, entries: TalentEntry[]): string {
  const items = entries.map((e) => {
    const evidence = e.evidence
      .map((ev) => `<li>${escapeHtml(ev.kind)} ${escapeHtml(ev.detail)}: +${ev.contribution.toFixed(1)}</li>`)
      .join("");
    return `<li class="talent"><strong>${escapeHtml(e.token.slice(0, 10))}…</strong>
      score ${e.score.toFixed(1)}<ul class="evidence">${evidence}</ul></li>`;
  });
  return `<div class="talents" data-category="${escapeHtml(category)}">
    <h4>${escapeHtml(category)}</h4><ol>${items.join("")}</ol></div>`;
}

export function recommendations(recs: Recommendation[]): string {
  const items = recs.map((r) => {
    const badges =
      (r.cross_school ? `<span class="badge cross-school">cross-school</span>` : "") +
      (r.cold_start ? `<span class="badge cold-start">cold start</span>` : "");
    return `<li>${escapeHtml(r.elective_id)} <span class="score">${r.score.toFixed(3)}</span>${badges}</li>`;
  });
  return `<ol class="recommendations">${items.join("")}</ol>`;
}

export function errorBanner(message: string): string {
  return `<div class="banner error">${escapeHtml(message)}</div>`;
}
