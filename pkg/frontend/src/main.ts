import { LabelServiceClient } from "./api.js";
import { SessionController } from "./state.js";
import { render } from "./ui.js";

const client = new LabelServiceClient("");
const controller = new SessionController(client);
const root = document.getElementById("app");

if (root) {
  controller.subscribe(() => render(root, controller, client));
  render(root, controller, client);

  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const answer = controller.answerForKey(event.key);
    if (answer) void controller.submit(answer);
  });

  const sessionId = new URLSearchParams(window.location.search).get("session");
  if (sessionId) {
    void controller.resume(sessionId);
  }
}
