/**
 * Vitest global setup: spawn the Python fixture script, wait for its JSON
 * line describing the two seeded services, and hand the values to the test
 * workers via provide/inject. Teardown closes the child's stdin, which is
 * its signal to stop both services.
 */

import { spawn } from "node:child_process";
import { once } from "node:events";
import { fileURLToPath } from "node:url";
import * as readline from "node:readline";
import type { GlobalSetupContext } from "vitest/node";

export interface FixtureInfo {
  eye: string;
  mouse: string;
  datasetRid: string;
  datasetMinid: string;
  subjectRids: string[];
  imageRids: string[];
  completedExecution: string;
  failedExecution: string;
}

declare module "vitest" {
  export interface ProvidedContext {
    fixture: FixtureInfo;
  }
}

export default async function setup({ provide }: GlobalSetupContext) {
  const script = fileURLToPath(new URL("./serve_fixture.py", import.meta.url));
  const child = spawn("python3", [script], { stdio: ["pipe", "pipe", "pipe"] });
  child.stderr.pipe(process.stderr);

  const rl = readline.createInterface({ input: child.stdout });
  const line = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error("fixture services took too long to start")),
      120_000,
    );
    rl.once("line", (text) => {
      clearTimeout(timer);
      resolve(text);
    });
    child.once("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`fixture script exited early with code ${code}`));
    });
  });
  provide("fixture", JSON.parse(line) as FixtureInfo);

  return async () => {
    child.stdin.end();
    const killer = setTimeout(() => child.kill("SIGKILL"), 10_000);
    await once(child, "exit");
    clearTimeout(killer);
  };
}
