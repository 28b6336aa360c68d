/** Pure rendering: workbench state -> HTML strings.
 *
 * Kept free of DOM access so the view is unit-testable; main.ts mounts the
 * strings and wires events by element id.
 */
import { WorkbenchState, canCommit } from "./state.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export function renderBanner(state: WorkbenchState): string {
  if (state.connected) return "";
  return `<div class="banner error" id="offline-banner">
    service unreachable &mdash; read-only mode, nothing can be committed
  </div>`;
}

export function renderPalette(state: WorkbenchState): string {
  const buttons = state.patterns.map((p) =>
    `<button class="palette-item" data-rule="${esc(p.rule)}">
       <span class="rule">${esc(p.rule)}</span>
       <span class="pattern">${esc(p.pattern)}</span>
     </button>`).join("\n");
  return `<section class="palette"><h2>Templates</h2>${buttons}</section>`;
}

export function renderCards(state: WorkbenchState): string {
  if (!state.session) return "";
  const problem = state.validation.problem;
  const cards = state.session.templates.map((row) => {
    const slots = row.slots.map((slot) => {
      const fill = row.fills[slot];
      const key = `${row.index}:${slot}`;
      const options = (state.options[key] ?? []).map((o) =>
        `<option value="${esc(o.token)}"${o.token === fill ? " selected" : ""}>
           ${esc(o.display)}
         </option>`).join("");
      return `<label class="slot">$${esc(slot)}
        <select data-index="${row.index}" data-slot="${esc(slot)}">
          <option value="">&mdash;</option>${options}
        </select>
        ${fill ? `<span class="fill">[${esc(fill)}]</span>` : ""}
      </label>`;
    }).join("\n");
    const badge = problem
      ? `<span class="badge error">${esc(problem.failureClass)}</span>`
      : (state.validation.ok ? `<span class="badge ok">ok</span>` : "");
    return `<article class="card" data-index="${row.index}">
      <header>Result_${row.index} &larr; ${esc(row.pattern)} ${badge}</header>
      ${slots}
      <button class="remove" data-index="${row.index}">remove</button>
    </article>`;
  }).join("\n");
  const detail = problem
    ? `<p class="problem">${esc(problem.failureClass)}: ${esc(problem.detail)}</p>`
    : "";
  return `<section class="cards">${cards}${detail}</section>`;
}

export function renderPreview(state: WorkbenchState): string {
  if (!state.preview) {
    return `<section class="preview empty">no valid preview yet</section>`;
  }
  const templates = state.preview.templates.map((t) =>
    `<li>${esc(t)}</li>`).join("");
  return `<section class="preview">
    <h2>Templates</h2><ol>${templates}</ol>
    <h2>Meaning representation</h2>
    <pre id="mr-preview">${esc(state.preview.mr_text)}</pre>
    <h2>Denotation</h2>
    <pre id="denotation-preview">${esc(state.preview.denotation)}</pre>
  </section>`;
}

export function renderCommitBar(state: WorkbenchState): string {
  const disabled = canCommit(state) ? "" : " disabled";
  return `<section class="commit-bar">
    <input id="utterance" type="text" placeholder="write the utterance"
           value="${esc(state.utterance)}"/>
    <button id="commit"${disabled}>commit</button>
    <span class="count">${state.committed.length} committed</span>
  </section>`;
}

export function renderWorkbench(state: WorkbenchState): string {
  return [
    renderBanner(state),
    `<main class="workbench">`,
    renderPalette(state),
    renderCards(state),
    renderPreview(state),
    renderCommitBar(state),
    `</main>`,
  ].join("\n");
}
