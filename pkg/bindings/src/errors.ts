/** Error raised when caller-provided buffers violate the array contract.
 * The message always names the offending argument. */
export class BridgeValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BridgeValidationError";
  }
}

/** Error raised when the native tokenizer process fails. */
export class BridgeExecutionError extends Error {
  readonly exitCode: number | null;
  readonly stderr: string;

  constructor(message: string, exitCode: number | null, stderr: string) {
    super(message);
    this.name = "BridgeExecutionError";
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}

/** Error raised when a native output file cannot be parsed. */
export class BridgeFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BridgeFormatError";
  }
}
