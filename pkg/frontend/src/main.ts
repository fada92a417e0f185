import { ReviewApi } from './api.js';
import { App } from './app.js';

// The service origin defaults to the page's own; override with ?api=http://host:port
// when the page is served from a file or a different port than the API.
const params = new URLSearchParams(window.location.search);
const api = new ReviewApi(params.get('api') ?? '');

const root = document.getElementById('app');
if (!root) {
    throw new Error('missing #app container');
}

const app = new App(root, api);
app.mount();

const sessionId = params.get('session');
if (sessionId) {
    void app.load(sessionId);
}
