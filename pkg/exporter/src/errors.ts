/** Failure in reading a store, encoding, or validating an interchange file. */
export class ExportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ExportError";
  }
}
