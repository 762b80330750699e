/**
 * Keyboard-first annotation flow. Number keys drive the focused control:
 * they set ordinal values directly and pick (or toggle) the n-th code of
 * choice controls. Pure functions so the mapping is unit-testable.
 */

import type { FormState } from "./form.js";
import { setChoice, setOrdinal, toggleCode } from "./form.js";
import type { Schema, SchemaVariable } from "./types.js";

export type KeyAction =
  | { type: "focus"; index: number }
  | { type: "set-ordinal"; field: string; value: number }
  | { type: "set-choice"; field: string; code: string }
  | { type: "toggle-code"; field: string; code: string }
  | { type: "submit" }
  | { type: "none" };

export interface FocusState {
  index: number;
}

function clampIndex(schema: Schema, index: number): number {
  const n = schema.variables.length;
  return ((index % n) + n) % n;
}

function digitAction(variable: SchemaVariable, digit: number): KeyAction {
  if (variable.kind === "ordinal") {
    const [lo, hi] = variable.ordinal_range ?? [1, 1];
    // "0" means 10 so wealth's full 1..10 scale stays reachable
    const value = digit === 0 ? 10 : digit;
    if (value < lo || value > hi) return { type: "none" };
    return { type: "set-ordinal", field: variable.name, value };
  }
  const codes = variable.codes ?? [];
  const position = digit === 0 ? 10 : digit;
  const code = codes[position - 1];
  if (code === undefined) return { type: "none" };
  return variable.kind === "single-choice"
    ? { type: "set-choice", field: variable.name, code }
    : { type: "toggle-code", field: variable.name, code };
}

/** Translate one key press into an action given the focused variable. */
export function keyToAction(schema: Schema, focus: FocusState, key: string): KeyAction {
  if (key === "ArrowDown" || key === "j" || key === "Tab") {
    return { type: "focus", index: clampIndex(schema, focus.index + 1) };
  }
  if (key === "ArrowUp" || key === "k") {
    return { type: "focus", index: clampIndex(schema, focus.index - 1) };
  }
  if (key === "Enter") {
    return { type: "submit" };
  }
  if (/^[0-9]$/.test(key)) {
    const variable = schema.variables[focus.index];
    if (!variable) return { type: "none" };
    return digitAction(variable, Number(key));
  }
  return { type: "none" };
}

/** Apply a non-focus, non-submit action to the form state. */
export function applyAction(state: FormState, action: KeyAction): void {
  switch (action.type) {
    case "set-ordinal":
      setOrdinal(state, action.field, action.value);
      break;
    case "set-choice":
      setChoice(state, action.field, action.code);
      break;
    case "toggle-code":
      toggleCode(state, action.field, action.code);
      break;
    default:
      break;
  }
}
