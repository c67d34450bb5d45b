import { ReviewApp } from "./app.js";

function mount(): void {
  const connect = document.querySelector<HTMLFormElement>("#connect");
  const shell = document.querySelector<HTMLElement>("#shell");
  if (!connect || !shell) {
    throw new Error("page is missing the connect form or the app shell");
  }

  connect.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(connect);
    const baseUrl = String(data.get("base-url") ?? "").trim();
    const token = String(data.get("token") ?? "").trim();
    if (!baseUrl) {
      connect.querySelector<HTMLElement>(".field-error")!.textContent =
        "enter the API base URL";
      return;
    }
    connect.hidden = true;
    shell.hidden = false;
    const app = new ReviewApp(shell, { baseUrl, token });
    void app.start();
  });
}

mount();
