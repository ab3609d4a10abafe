import type { LabelServiceClient } from "./api.js";
import type { SessionController, ControllerState } from "./state.js";
import type { Answer, Query } from "./types.js";
import { PAIR_ANSWERS, TRIPLET_ANSWERS } from "./types.js";

const ANSWER_CAPTIONS: Record<string, string> = {
  yes: "Yes (y)",
  no: "No (n)",
  dnk: "Don't know (d)",
  ml: "Same cluster (m)",
  cl: "Different clusters (c)",
};

const PANEL_ROLES: Record<string, string[]> = {
  triplet: ["Instance 1 (anchor)", "Instance 2", "Instance 3"],
  pair: ["Instance 1", "Instance 2"],
};

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

function instancePanel(query: Query, pos: number): HTMLElement {
  const panel = el("div", "panel");
  panel.appendChild(el("h3", undefined, PANEL_ROLES[query.mode][pos]));
  panel.appendChild(el("p", "muted", `row ${query.indices[pos] + 1}`));
  const image = query.images[pos];
  if (image) {
    const img = el("img");
    img.src = image;
    img.alt = `instance ${query.indices[pos] + 1}`;
    panel.appendChild(img);
  } else {
    const table = el("table", "features");
    const values = query.instances[pos];
    values.slice(0, 8).forEach((v, j) => {
      const row = el("tr");
      row.appendChild(el("td", "muted", `f${j + 1}`));
      row.appendChild(el("td", undefined, v.toPrecision(4)));
      table.appendChild(row);
    });
    if (values.length > 8) {
      const row = el("tr");
      row.appendChild(el("td", "muted", "…"));
      row.appendChild(el("td", undefined, `${values.length - 8} more`));
      table.appendChild(row);
    }
    panel.appendChild(table);
  }
  return panel;
}

function questionText(mode: string): string {
  return mode === "triplet"
    ? "Is instance 1 more similar to instance 2 than to instance 3?"
    : "Do these two instances belong to the same cluster?";
}

function renderQuery(root: HTMLElement, controller: SessionController, state: ControllerState): void {
  const query = state.current;
  if (!query) return;
  root.appendChild(el("h2", undefined, questionText(query.mode)));
  const panels = el("div", "panels");
  query.indices.forEach((_, pos) => panels.appendChild(instancePanel(query, pos)));
  root.appendChild(panels);

  const buttons = el("div", "answers");
  const answers = query.mode === "triplet" ? TRIPLET_ANSWERS : PAIR_ANSWERS;
  for (const answer of answers) {
    const button = el("button", `answer answer-${answer}`, ANSWER_CAPTIONS[answer]);
    button.disabled = state.submitting;
    button.addEventListener("click", () => void controller.submit(answer as Answer));
    buttons.appendChild(button);
  }
  root.appendChild(buttons);
}

function renderDashboard(
  root: HTMLElement,
  controller: SessionController,
  client: LabelServiceClient,
  state: ControllerState,
): void {
  const status = state.status;
  if (!status) return;
  const dash = el("div", "dashboard");

  const bar = el("div", "progress");
  const fill = el("div", "progress-fill");
  fill.style.width = status.total ? `${(100 * status.answered) / status.total}%` : "100%";
  bar.appendChild(fill);
  dash.appendChild(bar);
  dash.appendChild(
    el("p", "muted", `${status.answered} of ${status.total} answered — session ${status.id}`),
  );

  const dist = el("div", "distribution");
  const total = Math.max(status.answered, 1);
  for (const [answer, count] of Object.entries(status.distribution).sort()) {
    const item = el("div", "dist-item");
    item.appendChild(el("span", "dist-label", `${answer}: ${count}`));
    const track = el("div", "dist-track");
    const barFill = el("div", "dist-fill");
    barFill.style.width = `${(100 * count) / total}%`;
    track.appendChild(barFill);
    item.appendChild(track);
    dist.appendChild(item);
  }
  dash.appendChild(dist);

  const actions = el("div", "actions");
  const exportLink = el("a", "button-like", "Export constraints");
  exportLink.setAttribute("href", client.exportUrl(status.id));
  exportLink.setAttribute("download", `${status.id}-constraints.txt`);
  actions.appendChild(exportLink);

  const clusterButton = el("button", "secondary", "Run clustering now");
  const resultBox = el("p", "cluster-result");
  clusterButton.addEventListener("click", () => {
    clusterButton.disabled = true;
    resultBox.textContent = "clustering…";
    const k = Number(
      (document.getElementById("cluster-k") as HTMLInputElement | null)?.value ?? "3",
    );
    client
      .runClustering(status.id, k)
      .then((res) => {
        resultBox.textContent =
          res.fmeasure === null
            ? `done in ${res.em_iterations} iterations (no ground truth to score)`
            : `F-measure ${res.fmeasure.toFixed(4)} (ARI ${res.ari?.toFixed(4)}, NMI ${res.nmi?.toFixed(4)})`;
      })
      .catch((err) => {
        resultBox.textContent = `clustering failed: ${err.message}`;
      })
      .finally(() => {
        clusterButton.disabled = false;
      });
  });
  const kInput = el("input");
  kInput.id = "cluster-k";
  kInput.type = "number";
  kInput.value = "3";
  kInput.min = "2";
  actions.appendChild(clusterButton);
  actions.appendChild(kInput);
  dash.appendChild(actions);
  dash.appendChild(resultBox);
  root.appendChild(dash);
}

function renderCreateForm(root: HTMLElement, controller: SessionController): void {
  root.appendChild(el("h2", undefined, "Start a labeling session"));
  const form = el("div", "create-form");
  const dataset = el("input");
  dataset.placeholder = "dataset path (relative to the service data root)";
  dataset.id = "dataset";
  const count = el("input");
  count.type = "number";
  count.value = "20";
  const mode = el("select");
  for (const m of ["triplet", "pair"]) {
    const opt = el("option", undefined, m);
    opt.setAttribute("value", m);
    mode.appendChild(opt);
  }
  const go = el("button", undefined, "Create session");
  go.addEventListener("click", () => {
    void controller
      .start({
        dataset: dataset.value,
        mode: mode.value as "triplet" | "pair",
        count: Number(count.value),
      })
      .then(() => {
        const id = controller.sessionId;
        if (id) window.history.replaceState(null, "", `?session=${id}`);
      });
  });
  for (const node of [dataset, count, mode, go]) form.appendChild(node);
  root.appendChild(form);
}

/** Full re-render from state; the DOM holds no session data of its own. */
export function render(
  root: HTMLElement,
  controller: SessionController,
  client: LabelServiceClient,
): void {
  const state = controller.state;
  root.replaceChildren();
  if (state.error) {
    root.appendChild(el("p", "error", state.error));
  }
  if (!state.status) {
    renderCreateForm(root, controller);
    return;
  }
  if (state.done) {
    root.appendChild(el("h2", undefined, "All queries answered"));
  } else {
    renderQuery(root, controller, state);
  }
  renderDashboard(root, controller, client, state);
}
