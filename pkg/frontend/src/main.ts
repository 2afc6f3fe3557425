import { ApiClient } from "./api.js";
import { Console } from "./console.js";

const root = document.getElementById("app");
if (root) {
  const console_ = new Console(root, new ApiClient(""));
  void console_.init();
}
