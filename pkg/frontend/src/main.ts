import { NpckitClient } from "./api.js";
import { createChatApp } from "./app.js";

declare global {
  interface Window {
    NPCKIT_API_BASE?: string;
  }
}

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? window.NPCKIT_API_BASE ?? "http://127.0.0.1:8642";

const mount = document.getElementById("app");
if (mount === null) {
  throw new Error("missing #app mount point");
}
createChatApp(mount, new NpckitClient(base));
