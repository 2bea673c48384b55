import { Gateway } from "./api.js";
import { mountApp } from "./ui.js";

const root = document.getElementById("app");
if (root) {
  // served from /ui on the gateway itself, so the API lives at the origin
  void mountApp(root, new Gateway(""));
}
