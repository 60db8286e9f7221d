// Browser shell: mounts the controller onto #app and wires DOM events.
// The client keeps no game state of its own; a refresh rehydrates the
// session named in the URL hash.

import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { Role } from "./types.js";

function mount(): void {
  const root = document.getElementById("app");
  if (!root) {
    return;
  }
  const params = new URLSearchParams(window.location.search);
  const role = (params.get("role") === "assistant" ? "assistant" : "user") as Role;
  const api = new ApiClient("");
  const controller = new SessionController(api, role, (html) => {
    root.innerHTML = html;
  });

  const sessionFromHash = window.location.hash.replace(/^#/, "") || null;
  void controller.start(sessionFromHash).then(() => {
    if (controller.state) {
      window.location.hash = controller.state.session_id;
    }
  });

  root.addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    if (target.id === "utterance-send") {
      const input = document.getElementById("utterance-input") as HTMLInputElement | null;
      if (input) {
        void controller.submitUtterance(input.value);
      }
    } else if (target.id === "assistant-act") {
      void controller.assistantAct();
    } else if (target.id === "retry-btn") {
      void controller.refresh();
    }
  });

  root.addEventListener("keydown", (ev) => {
    const kev = ev as KeyboardEvent;
    const target = ev.target as HTMLElement;
    if (kev.key === "Enter" && target.id === "utterance-input") {
      void controller.submitUtterance((target as HTMLInputElement).value);
    }
  });
}

mount();
