/** Threshold form state and validation.
 *
 * The ordering constraints are NOT hardcoded here: they load from the shared
 * schema file (schema/alert_config_constraints.json) that the server side is
 * pinned to, so the form can never accept a config the API would reject.
 */

import type { ThresholdConfig } from "./types.js";

export interface ConstraintRule {
  lhs: string | number;
  op: "<" | "<=";
  rhs: string | number;
}

export interface ConstraintSchema {
  orderings: ConstraintRule[];
}

export interface ThresholdFormState {
  values: ThresholdConfig;
  dirty: boolean;
  lastSnapshot: number | null;
}

function resolve(side: string | number, values: ThresholdConfig): number {
  if (typeof side === "number") return side;
  const v = (values as unknown as Record<string, unknown>)[side];
  if (typeof v !== "number") throw new Error(`constraint references non-numeric field ${side}`);
  return v;
}

export function violations(values: ThresholdConfig, schema: ConstraintSchema): string[] {
  const out: string[] = [];
  for (const rule of schema.orderings) {
    const lhs = resolve(rule.lhs, values);
    const rhs = resolve(rule.rhs, values);
    const ok = rule.op === "<" ? lhs < rhs : lhs <= rhs;
    if (!ok) out.push(`${rule.lhs} ${rule.op} ${rule.rhs} violated (${lhs} vs ${rhs})`);
  }
  return out;
}

export function canSubmit(state: ThresholdFormState, schema: ConstraintSchema): boolean {
  return state.dirty && violations(state.values, schema).length === 0;
}

export function setField(
  state: ThresholdFormState,
  field: keyof ThresholdConfig,
  value: number,
): ThresholdFormState {
  return {
    values: { ...state.values, [field]: value },
    dirty: true,
    lastSnapshot: state.lastSnapshot,
  };
}
