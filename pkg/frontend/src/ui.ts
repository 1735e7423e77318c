// DOM wiring: one screen at a time, two answer controls, no back control.

import { Label, Report, VttApi } from "./api.js";
import { QuizRunner, RunnerState, resumeOrStart } from "./quiz.js";

const REPORT_ROWS: Array<[keyof Report, string, (v: number) => string]> = [
  ["accuracy_percent", "Overall accuracy", (v) => `${v.toFixed(1)} %`],
  ["tpr", "True positive rate", (v) => v.toFixed(2)],
  ["fpr", "False positive rate", (v) => v.toFixed(2)],
  ["switch_rate_percent", "Switch rate", (v) => `${v.toFixed(2)} %`],
  ["mean_time_synthetic_s", "Avg time on synthetic", (v) => `${v.toFixed(2)} s`],
  ["mean_time_real_s", "Avg time on real", (v) => `${v.toFixed(2)} s`],
  ["total_time_s", "Total test time", (v) => `${(v / 60).toFixed(2)} min`],
];

export function formatReportRows(report: Report): Array<[string, string]> {
  return REPORT_ROWS.map(([key, title, fmt]) => [title, fmt(report[key] as number)]);
}

export function mountApp(root: HTMLElement, api: VttApi = new VttApi()): void {
  root.innerHTML = `
    <div class="screen" id="start-screen">
      <h1>Segment authenticity quiz</h1>
      <p>You will see 50 images, one at a time. Decide whether each is a real
         scan or a generated one. You cannot go back.</p>
      <label>Quiz ID <input id="quiz-id" autocomplete="off"></label>
      <label>Your ID <input id="grader-id" autocomplete="off"></label>
      <button id="start-btn">Start</button>
      <p class="error" id="start-error" hidden></p>
    </div>
    <div class="screen" id="quiz-screen" hidden>
      <p class="progress" id="progress"></p>
      <img id="item-image" alt="CT segment" draggable="false">
      <div class="choices">
        <button id="real-btn" disabled>Real <kbd>R</kbd></button>
        <button id="synthetic-btn" disabled>Synthetic <kbd>S</kbd></button>
      </div>
    </div>
    <div class="screen" id="error-screen" hidden>
      <h2>Connection problem</h2>
      <p id="error-message"></p>
      <p>Your progress is saved on the server.</p>
      <button id="retry-btn">Retry</button>
    </div>
    <div class="screen" id="finish-screen" hidden>
      <h2>Done. Thank you!</h2>
      <table id="report-table"></table>
    </div>`;

  const el = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`) as T;
  const screens = ["start-screen", "quiz-screen", "error-screen", "finish-screen"];
  const show = (id: string) => {
    for (const s of screens) el(s).hidden = s !== id;
  };

  const image = el<HTMLImageElement>("item-image");
  const realBtn = el<HTMLButtonElement>("real-btn");
  const synthBtn = el<HTMLButtonElement>("synthetic-btn");
  let runner: QuizRunner | null = null;

  const render = (state: RunnerState) => {
    if (state.kind === "loading") {
      realBtn.disabled = true;
      synthBtn.disabled = true;
      return;
    }
    if (state.kind === "showing") {
      show("quiz-screen");
      el("progress").textContent = `Image ${state.answered + 1} of ${state.total}`;
      realBtn.disabled = true;
      synthBtn.disabled = true;
      image.onload = () => {
        // the response timer starts only once the image has painted
        realBtn.disabled = false;
        synthBtn.disabled = false;
        runner?.imageLoaded();
      };
      image.src = state.imageUrl;
      return;
    }
    if (state.kind === "error") {
      show("error-screen");
      el("error-message").textContent = state.message;
      return;
    }
    show("finish-screen");
    const table = el<HTMLTableElement>("report-table");
    table.innerHTML = "";
    for (const [title, value] of formatReportRows(state.report)) {
      const row = table.insertRow();
      row.insertCell().textContent = title;
      row.insertCell().textContent = value;
    }
  };

  const submit = (label: Label) => {
    void runner?.answer(label);
  };
  realBtn.addEventListener("click", () => submit("real"));
  synthBtn.addEventListener("click", () => submit("synthetic"));
  document.addEventListener("keydown", (ev) => {
    if (ev.key === "r" || ev.key === "R") submit("real");
    if (ev.key === "s" || ev.key === "S") submit("synthetic");
  });
  el("retry-btn").addEventListener("click", () => void runner?.retry());

  el("start-btn").addEventListener("click", async () => {
    const quizId = el<HTMLInputElement>("quiz-id").value.trim();
    const graderId = el<HTMLInputElement>("grader-id").value.trim();
    const errorOut = el("start-error");
    errorOut.hidden = true;
    if (!quizId || !graderId) {
      errorOut.textContent = "Both fields are required.";
      errorOut.hidden = false;
      return;
    }
    try {
      const sessionId = await resumeOrStart(api, sessionStorage, quizId, graderId);
      runner = new QuizRunner(api, sessionId);
      runner.subscribe(render);
      await runner.advance();
    } catch (err) {
      errorOut.textContent = String(err);
      errorOut.hidden = false;
    }
  });
}
