/**
 * Spawns the real fieldbook service on a scratch data directory for
 * end-to-end tests. Connectivity follows a script: the first probe
 * sees every sink down, every later probe sees them up — so the first
 * manual flush leaves items queued and the second delivers them.
 */
import { spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
const FRONTEND_ROOT = join(dirname(fileURLToPath(import.meta.url)), "..", "..");
export async function startService() {
    const dataDir = mkdtempSync(join(tmpdir(), "fieldbook-e2e-"));
    const port = 8640 + (process.pid % 200);
    writeFileSync(join(dataDir, "config.json"), JSON.stringify({
        connectivity: { mode: "script", script: "net.script" },
        bind_port: port,
    }));
    writeFileSync(join(dataDir, "net.script"), "*=down\n*=up\n");
    const pythonRoot = join(FRONTEND_ROOT, "..", "src");
    const child = spawn("python3", ["-m", "fieldbook.cli", "--data-dir", dataDir, "serve",
        "--port", String(port), "--no-sync-daemon"], {
        env: { ...process.env, PYTHONPATH: pythonRoot },
        stdio: ["ignore", "pipe", "pipe"],
    });
    let stderr = "";
    child.stderr?.on("data", (chunk) => (stderr += chunk));
    const base = `http://127.0.0.1:${port}`;
    const deadline = Date.now() + 20000;
    while (Date.now() < deadline) {
        if (child.exitCode !== null) {
            throw new Error(`service exited early (${child.exitCode}): ${stderr}`);
        }
        try {
            const response = await fetch(`${base}/health`);
            if (response.ok) {
                return { base, dataDir, stop: () => child.kill("SIGTERM") };
            }
        }
        catch {
            // not up yet
        }
        await new Promise((resolve) => setTimeout(resolve, 150));
    }
    child.kill("SIGKILL");
    throw new Error(`service did not come up on ${base}: ${stderr}`);
}
