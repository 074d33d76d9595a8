import { ApiClient } from "./api.js";
import { mountApp } from "./view.js";

mountApp(document, new ApiClient(""));
