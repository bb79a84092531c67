export { ExportError } from "./errors";
export {
  StoredTemplate,
  WILDCARD,
  parseStore,
  readStore,
  realTemplates,
  vocabulary,
} from "./store";
export { fnv1a32, hashUnit, hashVector, l2Normalize } from "./hash";
export {
  DEFAULT_CONTEXTUAL_DIM,
  DEFAULT_CONTEXTUAL_MODEL,
  DEFAULT_STATIC_DIM,
  DEFAULT_STATIC_MODEL,
  ExportJob,
  MAX_TOKENS,
  Pooling,
  Row,
  checkModel,
  encodeTemplate,
  encodeToken,
  exportContextualTemplates,
  exportStaticTokens,
} from "./encode";
export {
  InterchangeSummary,
  renderInterchange,
  validateInterchange,
  writeFileAtomic,
} from "./interchange";
export { Io, main } from "./cli";
