export * from "./emb1.js";
export * from "./corpus.js";
export * from "./wav.js";
export * from "./encoder.js";
export * from "./export.js";
export * from "./annotate.js";
