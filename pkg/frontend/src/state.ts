/** View state lives entirely in the URL query string so any view is a
 * shareable link. Only the two paper-displayed topic levels exist. */

export type Page = "overview" | "staff-messages" | "models";
export type Level = "1" | "leaf";

export interface ViewState {
  page: Page;
  level: Level;
  team?: string;
  office?: string;
  from?: string;
  to?: string;
  /** level-1 label selected for drill-down on the staff-messages page */
  root?: string;
}

const PAGES: readonly Page[] = ["overview", "staff-messages", "models"];
const LEVELS: readonly Level[] = ["1", "leaf"];

export const DEFAULT_STATE: ViewState = { page: "overview", level: "1" };

export function parseViewState(search: string): ViewState {
  const params = new URLSearchParams(search);
  const page = params.get("page");
  const level = params.get("level");
  const state: ViewState = {
    page: PAGES.includes(page as Page) ? (page as Page) : DEFAULT_STATE.page,
    level: LEVELS.includes(level as Level) ? (level as Level) : DEFAULT_STATE.level,
  };
  for (const key of ["team", "office", "from", "to", "root"] as const) {
    const value = params.get(key);
    if (value) state[key] = value;
  }
  return state;
}

export function encodeViewState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.page !== DEFAULT_STATE.page) params.set("page", state.page);
  if (state.level !== DEFAULT_STATE.level) params.set("level", state.level);
  for (const key of ["team", "office", "from", "to", "root"] as const) {
    const value = state[key];
    if (value) params.set(key, value);
  }
  const text = params.toString();
  return text ? `?${text}` : "";
}

export function filtersOf(state: ViewState): { team?: string; office?: string; from?: string; to?: string } {
  const filters: Record<string, string> = {};
  for (const key of ["team", "office", "from", "to"] as const) {
    if (state[key]) filters[key] = state[key]!;
  }
  return filters;
}
