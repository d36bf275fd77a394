/** Dashboard wiring: fetch -> render -> events.
 *
 * One in-flight config write at a time; alert refetches cancel-and-replace.
 * API failures surface as non-blocking banners, never crashes.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  canSubmit,
  setField,
  violations,
  type ConstraintSchema,
  type ThresholdFormState,
} from "./thresholds.js";
import { DEFAULT_THRESHOLDS, type ThresholdConfig } from "./types.js";
import * as views from "./views.js";

const SLIDERS = [
  ["inschool_red_cutoff", -20, 0, 0.5],
  ["inschool_yellow_cutoff", -20, 0, 0.5],
  ["exam_red_deviation", -7, -1, 1],
  ["exam_yellow_deviation", -7, -1, 1],
  ["behavior_yellow", 0.05, 0.95, 0.05],
  ["behavior_red", 0.05, 1, 0.05],
] as const;

interface AppState {
  classId: string;
  teacherId: string;
  form: ThresholdFormState;
  writeInFlight: boolean;
  refetchController: AbortController | null;
}

export async function boot(root: HTMLElement, apiBase: string): Promise<void> {
  const api = new ApiClient(apiBase);
  const schema: ConstraintSchema = await (await fetch("./alert_config_constraints.json")).json();

  const state: AppState = {
    classId: "all",
    teacherId: "default",
    form: { values: { ...DEFAULT_THRESHOLDS }, dirty: false, lastSnapshot: null },
    writeInFlight: false,
    refetchController: null,
  };

  root.innerHTML = `
    <header><h1>schoolpulse</h1><div id="banners"></div></header>
    <div class="layout">
      <aside>
        <label>class <select id="class-select"></select></label>
        <form id="threshold-form"></form>
      </aside>
      <main>
        <div id="board"></div>
        <div id="drilldown"></div>
        <h2>IEP word cloud</h2><div id="wordcloud"></div>
        <h2>SEN × activity heatmap</h2><div id="heatmap"></div>
        <h2>Talent lists</h2><div id="talents"></div>
      </main>
    </div>`;

  const el = (id: string) => root.querySelector<HTMLElement>(`#${id}`)!;

  function banner(message: string): void {
    el("banners").innerHTML = views.errorBanner(message);
    setTimeout(() => (el("banners").innerHTML = ""), 6000);
  }

  async function refetchAlerts(): Promise<void> {
    state.refetchController?.abort();
    const controller = new AbortController();
    state.refetchController = controller;
    try {
      const payload = await api.classAlerts(state.classId, state.teacherId, controller.signal);
      if (!controller.signal.aborted) {
        el("board").innerHTML = views.alertBoard(payload);
      }
    } catch (error) {
      if (error instanceof ApiError) banner(error.message);
    }
  }

  function renderForm(): void {
    const form = el("threshold-form");
    const broken = violations(state.form.values, schema);
    const sliders = SLIDERS.map(([field, min, max, step]) => {
      const value = state.form.values[field];
      return `<label class="slider">${field}
        <input type="range" name="${field}" min="${min}" max="${max}" step="${step}"
               value="${value}"/>
        <span class="value">${value}</span></label>`;
    }).join("");
    form.innerHTML = `${sliders}
      <div class="violations">${broken.map((v) => views.errorBanner(v)).join("")}</div>
      <button type="submit" ${canSubmit(state.form, schema) && !state.writeInFlight ? "" : "disabled"}>
        apply thresholds</button>
      <span class="snapshot">${state.form.lastSnapshot === null ? "" : `snapshot #${state.form.lastSnapshot}`}</span>`;
  }

  el("threshold-form").addEventListener("input", (event) => {
    const input = event.target as HTMLInputElement;
    if (input.name) {
      state.form = setField(state.form, input.name as keyof ThresholdConfig, Number(input.value));
      renderForm();
    }
  });

  el("threshold-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    if (!canSubmit(state.form, schema) || state.writeInFlight) return;
    state.writeInFlight = true;
    renderForm();
    try {
      const result = await api.updateThresholds({
        ...state.form.values,
        teacher_id: state.teacherId,
      });
      state.form = { ...state.form, dirty: false, lastSnapshot: result.snapshot };
      await refetchAlerts(); // recolor under the new snapshot
    } catch (error) {
      if (error instanceof ApiError && error.status === 400) {
        banner(error.detail); // the violated ordering constraint, inline
      } else if (error instanceof ApiError) {
        banner(error.message);
      }
    } finally {
      state.writeInFlight = false;
      renderForm();
    }
  });

  el("board").addEventListener("click", async (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>("[data-token]");
    if (!row?.dataset.token) return;
    const token = row.dataset.token;
    try {
      const [record, predictions, alerts] = await Promise.all([
        api.studentRecord(token),
        api.predictions(token),
        api.studentAlerts(token, state.teacherId),
      ]);
      el("drilldown").innerHTML = views.drilldown(record, predictions, alerts.alerts);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) banner("unknown student");
      else if (error instanceof ApiError) banner(error.message);
    }
  });

  el("class-select").addEventListener("change", (event) => {
    state.classId = (event.target as HTMLSelectElement).value;
    void refetchAlerts();
  });

  try {
    const health = await api.health();
    el("class-select").innerHTML = ["all", ...health.schools]
      .map((s) => `<option value="${s}">${s}</option>`)
      .join("");
    const current = await api.getThresholds(state.teacherId);
    state.form = {
      values: { ...DEFAULT_THRESHOLDS, ...current, subject: current.subject ?? null },
      dirty: false,
      lastSnapshot: current.snapshot,
    };
  } catch (error) {
    if (error instanceof ApiError) banner(error.message);
  }

  renderForm();
  await refetchAlerts();
  try {
    el("wordcloud").innerHTML = views.wordCloud(await api.wordcloud(40));
    el("heatmap").innerHTML = views.heatmap(await api.heatmap());
    const categories = ["academic", "sports", "arts", "leadership", "service", "technology", "other"];
    const lists = await Promise.all(categories.map((c) => api.talents(c, 5, 5)));
    el("talents").innerHTML = categories.map((c, i) => views.talentList(c, lists[i] ?? [])).join("");
  } catch (error) {
    if (error instanceof ApiError) banner(error.message);
  }
}

declare global {
  interface Window {
    SCHOOLPULSE_API?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot(document.getElementById("app")!, window.SCHOOLPULSE_API ?? "http://127.0.0.1:8000");
}
