#!/usr/bin/env node
/** Command line entry: oir-export <text|audio|annotate> [flags]. */

import { readFileSync, writeFileSync } from "node:fs";

import { annotateCorpus, loadLexicon } from "./annotate.js";
import { exportAudioEmbeddings, exportTextEmbeddings } from "./export.js";

function getFlag(argv: string[], name: string): string | undefined {
  const i = argv.indexOf(`--${name}`);
  return i >= 0 ? argv[i + 1] : undefined;
}

function requireFlag(argv: string[], name: string): string {
  const v = getFlag(argv, name);
  if (v === undefined) {
    throw new Error(`missing required flag --${name}`);
  }
  return v;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "text":
        exportTextEmbeddings({
          corpusPath: getFlag(rest, "corpus") ?? "",
          contextPath: requireFlag(rest, "context"),
          outputPath: requireFlag(rest, "out"),
          lockPath: getFlag(rest, "lock") ?? "models.lock.json",
          log: (m) => console.log(m),
        });
        return 0;
      case "audio":
        exportAudioEmbeddings({
          corpusPath: requireFlag(rest, "corpus"),
          outputPath: requireFlag(rest, "out"),
          lockPath: getFlag(rest, "lock") ?? "models.lock.json",
          audioRoot: getFlag(rest, "audio-root"),
          log: (m) => console.log(m),
        });
        return 0;
      case "annotate": {
        const input = requireFlag(rest, "input");
        const output = requireFlag(rest, "out");
        const lexicon = loadLexicon(getFlag(rest, "lexicon"));
        const lines = readFileSync(input, "utf-8").split("\n");
        writeFileSync(output, annotateCorpus(lines, lexicon).join("\n") + "\n");
        console.log(`wrote ${output}`);
        return 0;
      }
      default:
        console.error("usage: oir-export <text|audio|annotate> [flags]");
        return 2;
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
