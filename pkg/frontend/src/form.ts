/**
 * Pure form-state model for the annotation schema. All domain knowledge
 * (variable kinds, ranges, codes) comes from the served schema; nothing
 * here hardcodes variable names.
 */

import type { AnnotationPayload, Schema, SchemaVariable } from "./types.js";

export interface OrdinalField {
  kind: "ordinal";
  value: number | null;
}

export interface SingleChoiceField {
  kind: "single-choice";
  value: string | null;
}

export interface MultiChoiceField {
  kind: "multi-choice";
  selected: Set<string>;
}

export type FieldState = OrdinalField | SingleChoiceField | MultiChoiceField;

export type FormState = Map<string, FieldState>;

export interface FieldError {
  field: string;
  message: string;
}

export function emptyForm(schema: Schema): FormState {
  const state: FormState = new Map();
  for (const variable of schema.variables) {
    if (variable.kind === "ordinal") {
      state.set(variable.name, { kind: "ordinal", value: null });
    } else if (variable.kind === "single-choice") {
      state.set(variable.name, { kind: "single-choice", value: null });
    } else {
      state.set(variable.name, { kind: "multi-choice", selected: new Set() });
    }
  }
  return state;
}

function field(state: FormState, name: string): FieldState {
  const f = state.get(name);
  if (!f) throw new Error(`unknown form field: ${name}`);
  return f;
}

export function setOrdinal(state: FormState, name: string, value: number): void {
  const f = field(state, name);
  if (f.kind !== "ordinal") throw new Error(`${name} is not an ordinal field`);
  f.value = value;
}

export function setChoice(state: FormState, name: string, code: string): void {
  const f = field(state, name);
  if (f.kind !== "single-choice") throw new Error(`${name} is not a single-choice field`);
  f.value = code;
}

export function toggleCode(state: FormState, name: string, code: string): void {
  const f = field(state, name);
  if (f.kind !== "multi-choice") throw new Error(`${name} is not a multi-choice field`);
  if (f.selected.has(code)) {
    f.selected.delete(code);
  } else {
    f.selected.add(code);
  }
}

function validateVariable(variable: SchemaVariable, f: FieldState): string | null {
  if (variable.kind === "ordinal" && f.kind === "ordinal") {
    const [lo, hi] = variable.ordinal_range ?? [NaN, NaN];
    if (f.value === null) return `required (${lo}–${hi})`;
    if (!Number.isInteger(f.value)) return "must be a whole number";
    if (f.value < lo || f.value > hi) return `must be between ${lo} and ${hi}`;
    return null;
  }
  if (variable.kind === "single-choice" && f.kind === "single-choice") {
    if (f.value === null) return "required";
    if (!(variable.codes ?? []).includes(f.value)) return `unknown code ${f.value}`;
    return null;
  }
  if (variable.kind === "multi-choice" && f.kind === "multi-choice") {
    if (f.selected.size === 0) return "select at least one";
    for (const code of f.selected) {
      if (!(variable.codes ?? []).includes(code)) return `unknown code ${code}`;
    }
    return null;
  }
  return "field kind does not match the schema";
}

/** Field-level validation against the served schema; empty array = valid. */
export function validateForm(schema: Schema, state: FormState): FieldError[] {
  const errors: FieldError[] = [];
  for (const variable of schema.variables) {
    const f = state.get(variable.name);
    if (!f) {
      errors.push({ field: variable.name, message: "missing field" });
      continue;
    }
    const message = validateVariable(variable, f);
    if (message !== null) errors.push({ field: variable.name, message });
  }
  return errors;
}

export function isComplete(schema: Schema, state: FormState): boolean {
  return validateForm(schema, state).length === 0;
}

/** Serialize a valid form into the POST /api/annotations wire format.
 *  Multi-choice selections are emitted sorted so the payload is canonical. */
export function toPayload(
  schema: Schema,
  state: FormState,
  addressId: string,
  annotatorId: string,
  timestamp: string,
): AnnotationPayload {
  const errors = validateForm(schema, state);
  if (errors.length > 0) {
    throw new Error(`form is invalid: ${errors.map((e) => e.field).join(", ")}`);
  }
  const values: AnnotationPayload["values"] = {};
  for (const variable of schema.variables) {
    const f = field(state, variable.name);
    if (f.kind === "ordinal") {
      values[variable.name] = f.value as number;
    } else if (f.kind === "single-choice") {
      values[variable.name] = f.value as string;
    } else {
      values[variable.name] = [...f.selected].sort();
    }
  }
  return {
    address_id: addressId,
    annotator_id: annotatorId,
    timestamp,
    values,
  };
}
