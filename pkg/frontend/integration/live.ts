/** Live integration against a running inference service.
 *
 * Opt-in: set AFFECTVLM_API (e.g. http://127.0.0.1:8787) with a trained
 * checkpoint served. Verifies the full loop the UI performs: /health,
 * /models, multipart /classify, byte-exact probability extraction, and the
 * verbatim 400 message for an incomplete upload.
 */

import assert from "node:assert/strict";

import { ApiClient } from "../src/api.js";
import { extractProbabilityRows } from "../src/render.js";

// 32x32 grayscale PNG fixture
const PNG_B64 =
  "iVBORw0KGgoAAAANSUhEUgAAACAAAAAgCAAAAABWESUoAAAEK0lEQVR4nAEgBN/7ARUnkMiEVgyuk2FHIOooJzdVXQyZtvhUBJOy401Crau4ApOxaAw0Tz4PGItLTgAsJCeQv8nbslKS9qzQJG0mCmB5BEJHpFPKqvvA0SJEUbfEBcBGKxmzHgJYVCV+SCs57AD1AqP+pvSF6SttPL0nX04wsYo4Df0/lTZZMz3JEHI7ltDSBLVfwH73huj/sGIVxQRCbd67Uc0wy65PMS9JQSQd5A+JBMtU2yYs9XkOB8JkKOWacJtxhbtJvNLp8HBmClZuiuHJAd/P3QQaqVjyLLKMglLJAb/3XVzJAxYt+8aD3h1HgVMsAbdMy6ABILibVFSgc0j8QX1EUDZMB7cvCLBM7R7R0xl9AS/23tYjQAfvZ+JWZKqXWP4clxz0oU9t+x6kqs8BpyqQAWEhUetSJqegKh/cGdCv9c4FrjBb0VnvIfeELtIb5GVlAQByOvQtWj82a86V1PptZzIP9HndT8yZB80eXSCRDHUoABUSwX5socER9fRqd0WVNIjmgdIt4R82t00eFsoFDvHHBEnTHEri3eTojJD+hEPmiY7W5d4W8wb//xgKoesy8IwVAVg+FiNuZ2oC/g+qlx/1wtcjrHwV2Hr2riDjLgX8Ug0bAgh0s/1w7Ai+jjABq7JX1xZR20CeA/el0H/eW3X6AsA6AKUef0Pf3MJfy/lehSkbtw+ZHKrA72NjZbPIHVIOO7vuAPkRZt6AWcfcJYMlLYdAzV0uoEIQ/i4hegHJEwr2g+zkBML2PjLy1XdwYkAgVYGZ+DgkzWLvcXepvRoEzPW+FyLSBL2ob65nHWfJH3NFHTLP4kCm9ufLvbTk7E/ZLKNkGsp0Av95d0xSNcSnWjHudNg3IqpYpPm5EJYEKi3Wvp1wW+ZaAE3fIgRfqvGBIpgE0FIZJtPnL/7bUw0mbzQuRd8J63K8BDUSDD0i16r59OjPChfg/VvMuPHKooQMjUyNL0T/kyfLBF68dPfokgWM6enS89VL34VmTCTg99KSvka31sg1p2dTAtyqBYQjT9luJVq/3RfULjcMLWWlL8NMsKMksCYmWt/pAvmqNUwYaBXOv2QQy1AYTeMyF57J291sfATyAjQ5PJ8lAnOGzO0YTwjUdZh6Qit15b4H8yTl/SQRmhW47n9N3NVbAWpouAcbTgYe+B7R9itSaJjGDCHjKvGryhmYic91BeCrAbCcEg32SkcYzgBfwubZY1dPzIG0ptAgwkKn+yQ09inhAOIv/mT6VRTUKL3gN1CP3dp8kMwn7dw7oLqlEg84Gnu8BLC4fw4m07glxieERURLGfPjpB7labFHn14RorRY6OAKAmWTeCxChvxX/U0GXxOgDiY2Tjccykjtueoz2M8fOJf9ApqzYR3NIeA3Q3Dq1M2mBaRWBkxORKMT6n9Bv4W6ikoToPTyUR9mmJsAAAAASUVORK5CYII=";

async function main() {
  const base = process.env.AFFECTVLM_API;
  if (!base) {
    console.log("AFFECTVLM_API not set; live integration skipped");
    return;
  }
  const api = new ApiClient(base);

  const health = await api.health();
  assert.equal(health.status, "ok", "service must have a model loaded");
  const models = await api.models();
  assert.ok(models.length >= 1);
  console.log(`service ok, ${models.length} model(s)`);

  const png = Buffer.from(PNG_B64, "base64");
  const blob = new Blob([png], { type: "image/png" });

  const form = new FormData();
  for (const view of ["frontal", "left", "right"]) {
    form.append(view, blob, `${view}.png`);
  }
  const outcome = await api.classify(form);
  assert.equal(outcome.status, 200, outcome.rawText);
  const rows = extractProbabilityRows(outcome.rawText);
  assert.equal(rows.length, 6);
  let sum = 0;
  for (const row of rows) {
    // the UI displays raw substrings; they must appear verbatim in the body
    assert.ok(outcome.rawText.includes(row.rawValue));
    sum += row.fraction;
  }
  assert.ok(Math.abs(sum - 1.0) < 1e-6, `probabilities sum ${sum}`);
  console.log(`classify ok: predicted ${outcome.json.predicted}`);

  const bad = new FormData();
  bad.append("frontal", blob, "frontal.png");
  bad.append("left", blob, "left.png");
  const badOutcome = await api.classify(bad);
  assert.equal(badOutcome.status, 400);
  assert.equal(badOutcome.json.error, "exactly three views required");
  console.log("invalid upload surfaces the server message verbatim");
  console.log("live integration passed");
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
