import { ApiClient, RequestGate } from "./api";
import { renderModels, renderOverview, renderTopics } from "./render";
import { encodeViewState, filtersOf, parseViewState, type Page, type ViewState } from "./state";
import "./style.css";

const api = new ApiClient("");
const gate = new RequestGate();

let state: ViewState = parseViewState(location.search);

function setState(next: Partial<ViewState>, push = true): void {
  state = { ...state, ...next };
  for (const key of ["team", "office", "from", "to", "root"] as const) {
    if (!state[key]) delete state[key];
  }
  if (push) history.pushState(null, "", encodeViewState(state) || location.pathname);
  render();
}

function navBar(): HTMLElement {
  const nav = document.createElement("nav");
  const pages: [Page, string][] = [
    ["overview", "Overview"],
    ["staff-messages", "Staff messages"],
    ["models", "Models"],
  ];
  for (const [page, label] of pages) {
    const button = document.createElement("button");
    button.textContent = label;
    button.className = state.page === page ? "active" : "";
    button.addEventListener("click", () => setState({ page, root: undefined }));
    nav.append(button);
  }
  const token = document.createElement("input");
  token.type = "password";
  token.placeholder = "API token (if required)";
  token.className = "token";
  token.addEventListener("change", () => api.setToken(token.value || null));
  nav.append(token);
  return nav;
}

function filterBar(): HTMLElement {
  const bar = document.createElement("form");
  bar.className = "filters";
  const fields: [keyof ReturnType<typeof filtersOf>, string, string][] = [
    ["team", "Team", "e.g. T-A"],
    ["office", "Office", "e.g. O-01"],
    ["from", "From", "YYYY-MM-DD"],
    ["to", "To", "YYYY-MM-DD"],
  ];
  const inputs = new Map<string, HTMLInputElement>();
  for (const [key, label, placeholder] of fields) {
    const wrap = document.createElement("label");
    wrap.textContent = label;
    const input = document.createElement("input");
    input.placeholder = placeholder;
    input.value = state[key] ?? "";
    inputs.set(key, input);
    wrap.append(input);
    bar.append(wrap);
  }
  const apply = document.createElement("button");
  apply.textContent = "Apply filters";
  bar.append(apply);
  bar.addEventListener("submit", (event) => {
    event.preventDefault();
    setState({
      team: inputs.get("team")!.value || undefined,
      office: inputs.get("office")!.value || undefined,
      from: inputs.get("from")!.value || undefined,
      to: inputs.get("to")!.value || undefined,
    });
  });
  return bar;
}

function render(): void {
  const app = document.getElementById("app")!;
  app.replaceChildren();
  const header = document.createElement("header");
  const title = document.createElement("h1");
  title.textContent = "PCC staff message insights";
  header.append(title, navBar());
  app.append(header);
  if (state.page !== "models") app.append(filterBar());
  const main = document.createElement("main");
  app.append(main);
  if (state.page === "overview") {
    void renderOverview(main, api, gate, state);
  } else if (state.page === "staff-messages") {
    void renderTopics(main, api, gate, state, (next) => setState(next));
  } else {
    void renderModels(main, api, gate);
  }
}

window.addEventListener("popstate", () => {
  state = parseViewState(location.search);
  render();
});

render();
