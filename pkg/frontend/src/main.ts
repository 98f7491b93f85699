import { ApiClient } from "./api.js";
import { App } from "./app.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "";
  const api = new ApiClient(base);
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  let session = params.get("session");
  if (!session) {
    const sessions = await api.sessions();
    if (sessions.length === 0) {
      root.textContent = "No sessions stored yet. Ingest a trace, then reload.";
      return;
    }
    session = sessions[0]!.session_id;
  }

  const app = new App(root, api, {
    session,
    reviewer: params.get("reviewer") ?? "reviewer",
    quizSeed: Number(params.get("seed") ?? "0"),
    pollMs: Number(params.get("poll") ?? "5000"),
  });
  await app.start();
}

void boot();
