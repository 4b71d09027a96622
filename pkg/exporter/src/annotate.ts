/**
 * Annotation helper: fills pos, lemma and is_coref for raw Dutch
 * transcripts using a bundled lexicon pipeline, with every tag mapped
 * onto the corpus's 14-tag enum (plus COREF/OTHER).
 *
 * Tag mapping (pipeline tag -> corpus enum):
 *   adjective->ADJ  adposition->ADP  adverb->ADV  auxiliary->AUX
 *   conjunction->CCONJ  determiner->DET  interjection->INTJ  noun->NOUN
 *   pron-dem->PRON_Dem  pron-int->PRON_Int  pron-prs->PRON_Prs
 *   punctuation->PUNCT  symbol->SYM  verb->VERB  anything else->OTHER
 */

import { existsSync, readFileSync } from "node:fs";

import { TokenRecord } from "./corpus.js";

export class PipelineUnavailable extends Error {}

export interface LexiconEntry {
  pos: string;
  lemma?: string;
}

export type Lexicon = Record<string, LexiconEntry>;

/* Small built-in lexicon; a fuller pipeline can be dropped in as JSON. */
export const BUILTIN_LEXICON: Lexicon = {
  wat: { pos: "PRON_Int" },
  wie: { pos: "PRON_Int" },
  waar: { pos: "PRON_Int" },
  hoe: { pos: "PRON_Int" },
  die: { pos: "PRON_Dem" },
  dat: { pos: "PRON_Dem" },
  deze: { pos: "PRON_Dem" },
  dit: { pos: "PRON_Dem" },
  je: { pos: "PRON_Prs" },
  jij: { pos: "PRON_Prs" },
  ik: { pos: "PRON_Prs" },
  hij: { pos: "PRON_Prs" },
  zij: { pos: "PRON_Prs" },
  wij: { pos: "PRON_Prs" },
  de: { pos: "DET" },
  het: { pos: "DET" },
  een: { pos: "DET" },
  zei: { pos: "VERB", lemma: "zeggen" },
  zegt: { pos: "VERB", lemma: "zeggen" },
  staat: { pos: "VERB", lemma: "staan" },
  heeft: { pos: "VERB", lemma: "hebben" },
  zie: { pos: "VERB", lemma: "zien" },
  ga: { pos: "VERB", lemma: "gaan" },
  is: { pos: "AUX", lemma: "zijn" },
  was: { pos: "AUX", lemma: "zijn" },
  kan: { pos: "AUX", lemma: "kunnen" },
  moet: { pos: "AUX", lemma: "moeten" },
  op: { pos: "ADP" },
  aan: { pos: "ADP" },
  naast: { pos: "ADP" },
  onder: { pos: "ADP" },
  in: { pos: "ADP" },
  nog: { pos: "ADV" },
  zo: { pos: "ADV" },
  hier: { pos: "ADV" },
  niet: { pos: "ADV" },
  en: { pos: "CCONJ" },
  of: { pos: "CCONJ" },
  maar: { pos: "CCONJ" },
  uh: { pos: "INTJ" },
  oh: { pos: "INTJ" },
  ja: { pos: "INTJ" },
  nee: { pos: "INTJ" },
  mooi: { pos: "ADJ" },
  groot: { pos: "ADJ" },
  klein: { pos: "ADJ" },
};

export function loadLexicon(path?: string): Lexicon {
  if (path === undefined) {
    return BUILTIN_LEXICON;
  }
  if (!existsSync(path)) {
    throw new PipelineUnavailable(`lexicon pipeline not found at ${path}`);
  }
  return JSON.parse(readFileSync(path, "utf-8")) as Lexicon;
}

const PUNCT = /^[.,!?;:]$/;
const SYMBOL = /^[%&€$#@+=*/\\-]$/;

function splitWords(transcript: string): string[] {
  const out: string[] = [];
  for (const chunk of transcript.split(/\s+/)) {
    if (chunk === "") continue;
    const m = chunk.match(/^(.*?)([.,!?;:]+)$/);
    if (m && m[1] !== "") {
      out.push(m[1]);
      for (const p of m[2]) out.push(p);
    } else {
      out.push(chunk);
    }
  }
  return out;
}

export function tagTranscript(transcript: string,
                              lexicon: Lexicon = BUILTIN_LEXICON,
                              ): TokenRecord[] {
  const words = splitWords(transcript);
  const tokens: TokenRecord[] = [];
  for (let i = 0; i < words.length; i++) {
    const word = words[i];
    const lower = word.toLowerCase();
    const nonverbal = /^#(\w+)#$/.exec(word);
    let pos: string;
    let lemma: string;
    if (nonverbal) {
      pos = "OTHER";
      lemma = "";
    } else if (PUNCT.test(word)) {
      pos = "PUNCT";
      lemma = word;
    } else if (SYMBOL.test(word)) {
      pos = "SYM";
      lemma = word;
    } else if (lexicon[lower]) {
      pos = lexicon[lower].pos;
      lemma = lexicon[lower].lemma ?? lower;
    } else {
      pos = "NOUN"; // open-class default for out-of-lexicon words
      lemma = lower;
    }
    // demonstratives standing alone (no following nominal) refer back
    const next = words[i + 1]?.toLowerCase();
    const isCoref =
      pos === "PRON_Dem" &&
      (next === undefined || PUNCT.test(next) || lexicon[next] !== undefined);
    tokens.push({
      text: word,
      lemma,
      pos,
      is_coref: isCoref,
      nonverbal: nonverbal ? nonverbal[1] : null,
      t_start: null,
      t_end: null,
    });
  }
  return tokens;
}

export interface RawRow {
  transcript?: string;
  tokens?: TokenRecord[];
  [key: string]: unknown;
}

export function annotateCorpus(lines: string[],
                               lexicon: Lexicon = BUILTIN_LEXICON,
                               ): string[] {
  const out: string[] = [];
  for (const line of lines) {
    if (line.trim() === "") {
      continue;
    }
    const row = JSON.parse(line) as RawRow;
    row.tokens = tagTranscript(row.transcript ?? "", lexicon);
    out.push(JSON.stringify(row));
  }
  return out;
}
