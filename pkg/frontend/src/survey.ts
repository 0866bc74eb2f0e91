// Post-task survey forms: plain inputs posted verbatim to the session API.

export interface SurveyField {
  name: string;
  label: string;
  min: number;
  max: number;
}

export const SURVEY_KINDS: Record<string, SurveyField[]> = {
  affect: [
    { name: "valence", label: "valence (unhappy 1 … happy 9)", min: 1, max: 9 },
    { name: "arousal", label: "arousal (calm 1 … excited 9)", min: 1, max: 9 },
    { name: "dominance", label: "dominance (controlled 1 … in control 9)", min: 1, max: 9 },
  ],
  workload: [
    { name: "workload", label: "overall workload (very low -2 … very high +2)", min: -2, max: 2 },
  ],
  task_load: [
    { name: "mental", label: "mental demand (0-20)", min: 0, max: 20 },
    { name: "physical", label: "physical demand (0-20)", min: 0, max: 20 },
    { name: "temporal", label: "time pressure (0-20)", min: 0, max: 20 },
    { name: "performance", label: "performance (0-20)", min: 0, max: 20 },
    { name: "effort", label: "effort (0-20)", min: 0, max: 20 },
    { name: "frustration", label: "frustration (0-20)", min: 0, max: 20 },
  ],
};

export function buildSurveyForm(
  container: HTMLElement,
  submit: (kind: string, payload: Record<string, number>) => void,
): void {
  const select = document.createElement("select");
  select.id = "survey-kind";
  for (const kind of Object.keys(SURVEY_KINDS)) {
    const option = document.createElement("option");
    option.value = kind;
    option.textContent = kind.replace("_", " ");
    select.appendChild(option);
  }
  const fields = document.createElement("div");
  fields.id = "survey-fields";

  const renderFields = () => {
    fields.replaceChildren(
      ...SURVEY_KINDS[select.value].map((field) => {
        const row = document.createElement("label");
        row.className = "survey-row";
        const input = document.createElement("input");
        input.type = "number";
        input.name = field.name;
        input.min = String(field.min);
        input.max = String(field.max);
        input.value = String(Math.round((field.min + field.max) / 2));
        row.append(`${field.label} `, input);
        return row;
      }),
    );
  };
  select.addEventListener("change", renderFields);
  renderFields();

  const button = document.createElement("button");
  button.id = "survey-submit";
  button.textContent = "Submit survey";
  button.addEventListener("click", () => {
    const payload: Record<string, number> = {};
    for (const input of fields.querySelectorAll<HTMLInputElement>("input")) {
      payload[input.name] = Number(input.value);
    }
    submit(select.value, payload);
  });

  const status = document.createElement("span");
  status.id = "survey-status";

  container.append(select, fields, button, status);
}

export async function postSurvey(
  baseUrl: string,
  sessionId: string,
  operator: number,
  kind: string,
  payload: Record<string, number>,
): Promise<boolean> {
  const response = await fetch(`${baseUrl}/sessions/${sessionId}/survey`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ operator, kind, payload }),
  });
  return response.ok;
}
