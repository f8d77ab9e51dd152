import { FieldbookApi } from "./api.js";
import { App } from "./render.js";

// Served at /ui from the fieldbook service, so the API is same-origin
// one level up.
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new App(root, new FieldbookApi(""));
app.start().catch((error) => {
  root.textContent = `failed to reach the fieldbook service: ${error}`;
});
