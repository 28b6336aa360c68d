/** Browser bootstrap: mount the workbench and wire DOM events. */
import { AuthoringClient } from "./api.js";
import { Workbench } from "./state.js";
import { renderWorkbench } from "./view.js";

const base = (window as unknown as { ONTOPARSE_BASE?: string }).ONTOPARSE_BASE
  ?? "http://127.0.0.1:8765";

const client = new AuthoringClient(base);
const workbench = new Workbench(client);
const root = document.getElementById("app")!;

function mount() {
  root.innerHTML = renderWorkbench(workbench.state);

  root.querySelectorAll<HTMLButtonElement>(".palette-item").forEach((button) => {
    button.addEventListener("click", () => {
      void workbench.addTemplate(button.dataset.rule!);
    });
  });
  root.querySelectorAll<HTMLButtonElement>(".remove").forEach((button) => {
    button.addEventListener("click", () => {
      void workbench.removeTemplate(Number(button.dataset.index));
    });
  });
  root.querySelectorAll<HTMLSelectElement>("select[data-slot]").forEach((sel) => {
    const index = Number(sel.dataset.index);
    const slot = sel.dataset.slot!;
    sel.addEventListener("focus", () => {
      void workbench.loadOptions(index, slot);
    });
    sel.addEventListener("change", () => {
      if (sel.value) void workbench.setFill(index, slot, sel.value);
    });
  });
  const utterance = root.querySelector<HTMLInputElement>("#utterance");
  utterance?.addEventListener("input", () => {
    workbench.setUtterance(utterance.value);
  });
  const commit = root.querySelector<HTMLButtonElement>("#commit");
  commit?.addEventListener("click", () => {
    void workbench.commit();
  });
}

workbench.onChange = mount;

void (async () => {
  await workbench.boot();
  if (workbench.state.connected && workbench.state.ontologies.length > 0) {
    await workbench.openSession(workbench.state.ontologies[0]);
  }
  mount();
})();
