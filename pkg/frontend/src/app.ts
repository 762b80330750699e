/**
 * DOM wiring for the annotation UI: schema-driven form, image panes with
 * retry placeholders, keyboard shortcuts, submit-and-advance, progress
 * and gated agreement feedback.
 */

import { ApiClient, ApiError } from "./api.js";
import type { FormState } from "./form.js";
import { emptyForm, toPayload, validateForm } from "./form.js";
import { applyAction, keyToAction } from "./keyboard.js";
import { AnnotationSession } from "./session.js";
import type { Schema, SchemaVariable, Task } from "./types.js";

const AGREEMENT_AFTER = 10; // completed items before agreement feedback shows

interface AppState {
  schema: Schema;
  session: AnnotationSession;
  form: FormState;
  focusIndex: number;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function labelFor(name: string): string {
  return name.replace(/_/g, " ");
}

function renderImagePane(container: HTMLElement, url: string, caption: string): void {
  container.textContent = "";
  const figure = el("figure", "image-pane");
  const img = el("img");
  img.src = url;
  img.alt = caption;
  const cap = el("figcaption", undefined, caption);
  img.onerror = () => {
    figure.textContent = "";
    const placeholder = el("div", "image-missing");
    placeholder.append(el("p", undefined, `no ${caption} imagery`));
    const retry = el("button", undefined, "retry");
    retry.type = "button";
    retry.onclick = () => renderImagePane(container, `${url}?retry=${Date.now()}`, caption);
    placeholder.append(retry);
    figure.append(placeholder, cap);
  };
  figure.append(img, cap);
  container.append(figure);
}

function renderOrdinal(variable: SchemaVariable, state: AppState, row: HTMLElement): void {
  const [lo, hi] = variable.ordinal_range ?? [1, 1];
  const group = el("div", "choices");
  const current = state.form.get(variable.name);
  for (let v = lo; v <= hi; v += 1) {
    const button = el("button", "choice", String(v));
    button.type = "button";
    if (current?.kind === "ordinal" && current.value === v) button.classList.add("selected");
    button.onclick = () => {
      applyAction(state.form, { type: "set-ordinal", field: variable.name, value: v });
      renderForm(state);
    };
    group.append(button);
  }
  row.append(group);
}

function renderChoice(variable: SchemaVariable, state: AppState, row: HTMLElement): void {
  const group = el("div", "choices");
  const current = state.form.get(variable.name);
  (variable.codes ?? []).forEach((code, i) => {
    const button = el("button", "choice", `${i + 1}. ${labelFor(code)}`);
    button.type = "button";
    const selected =
      (current?.kind === "single-choice" && current.value === code) ||
      (current?.kind === "multi-choice" && current.selected.has(code));
    if (selected) button.classList.add("selected");
    button.onclick = () => {
      applyAction(state.form, {
        type: variable.kind === "single-choice" ? "set-choice" : "toggle-code",
        field: variable.name,
        code,
      });
      renderForm(state);
    };
    group.append(button);
  });
  row.append(group);
}

function renderForm(state: AppState): void {
  const container = byId("form");
  container.textContent = "";
  const errors = new Map(validateForm(state.schema, state.form).map((e) => [e.field, e.message]));
  state.schema.variables.forEach((variable, index) => {
    const row = el("div", "field");
    if (index === state.focusIndex) row.classList.add("focused");
    row.onclick = () => {
      state.focusIndex = index;
      renderForm(state);
    };
    const heading = el("div", "field-name", labelFor(variable.name));
    if (variable.kind === "multi-choice") heading.textContent += " (multiple)";
    row.append(heading);
    if (variable.kind === "ordinal") {
      renderOrdinal(variable, state, row);
    } else {
      renderChoice(variable, state, row);
    }
    const message = errors.get(variable.name);
    row.append(el("div", "field-error", message ?? ""));
    container.append(row);
  });
  const submit = byId("submit") as HTMLButtonElement;
  submit.disabled = errors.size > 0;
}

function showTask(state: AppState, client: ApiClient, task: Task): void {
  byId("address").textContent = task.address_id;
  renderImagePane(byId("street"), task.images.street, "street");
  renderImagePane(byId("satellite"), task.images.satellite, "satellite");
  state.form = emptyForm(state.schema);
  state.focusIndex = 0;
  renderForm(state);
}

async function refreshProgress(state: AppState, client: ApiClient): Promise<number> {
  const progress = await client.progress(state.session.annotatorId);
  byId("progress").textContent =
    `${progress.completed} / ${progress.assigned} done, ${progress.remaining} left`;
  return progress.completed;
}

async function refreshAgreement(client: ApiClient): Promise<void> {
  const container = byId("agreement");
  const response = await client.agreement();
  if (response.status !== "ok") {
    container.textContent = "";
    return;
  }
  container.textContent = "";
  container.append(el("h3", undefined, "common-set agreement"));
  const list = el("ul");
  for (const row of response.report.variables) {
    const kappa = row.kappa === null ? "n/a" : row.kappa.toFixed(3);
    list.append(el("li", undefined, `${labelFor(row.name)}: ${kappa} (${row.band})`));
  }
  container.append(list);
}

async function submitCurrent(state: AppState, client: ApiClient): Promise<void> {
  const task = state.session.currentTask;
  if (!task) return;
  const errors = validateForm(state.schema, state.form);
  if (errors.length > 0) {
    renderForm(state); // surfaces per-field messages; nothing is sent
    return;
  }
  const payload = toPayload(
    state.schema,
    state.form,
    task.address_id,
    state.session.annotatorId,
    new Date().toISOString().slice(0, 19),
  );
  const status = byId("status");
  try {
    const { task: next } = await state.session.submitAndAdvance(payload);
    status.textContent = "";
    const completed = await refreshProgress(state, client);
    if (completed >= AGREEMENT_AFTER) await refreshAgreement(client);
    if (next) {
      showTask(state, client, next);
      // optimistic preload of the next task's imagery
      new Image().src = next.images.street;
      new Image().src = next.images.satellite;
    } else {
      byId("task").hidden = true;
      byId("done").hidden = false;
      await refreshAgreement(client);
    }
  } catch (error) {
    // rejected or failed submission: keep the form state for retry
    status.textContent =
      error instanceof ApiError ? `rejected: ${error.detail}` : `network error, retry (${error})`;
  }
}

export async function startApp(): Promise<void> {
  const client = new ApiClient("");
  const schema = await client.getSchema();

  const login = byId("login");
  const main = byId("main");
  const input = byId("annotator") as HTMLInputElement;
  input.value = localStorage.getItem("annotator_id") ?? "";

  (byId("start") as HTMLButtonElement).onclick = async () => {
    const annotatorId = input.value.trim();
    if (!annotatorId) return;
    localStorage.setItem("annotator_id", annotatorId);
    const session = new AnnotationSession(client, annotatorId);
    const state: AppState = { schema, session, form: emptyForm(schema), focusIndex: 0 };

    let task: Task | null;
    try {
      task = await session.start();
    } catch (error) {
      byId("login-error").textContent =
        error instanceof ApiError ? error.detail : String(error);
      return;
    }
    login.hidden = true;
    main.hidden = false;
    await refreshProgress(state, client);
    if (task) {
      showTask(state, client, task);
    } else {
      byId("task").hidden = true;
      byId("done").hidden = false;
      await refreshAgreement(client);
    }

    (byId("submit") as HTMLButtonElement).onclick = () => void submitCurrent(state, client);
    document.addEventListener("keydown", (event) => {
      if (event.target instanceof HTMLInputElement) return;
      const action = keyToAction(schema, { index: state.focusIndex }, event.key);
      if (action.type === "none") return;
      event.preventDefault();
      if (action.type === "focus") {
        state.focusIndex = action.index;
      } else if (action.type === "submit") {
        void submitCurrent(state, client);
        return;
      } else {
        applyAction(state.form, action);
      }
      renderForm(state);
    });
  };
}

startApp().catch((error) => {
  document.body.append(el("pre", "fatal", String(error)));
});
