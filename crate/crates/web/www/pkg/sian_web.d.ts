/* tslint:disable */
/* eslint-disable */

/**
 * Runs interaction selection on a fixed test function of six inputs.
 */
export function fis_demo(seed: bigint, theta: number, tau: number, max_order: number): string;

/**
 * Share of a random smooth function's variance at each interaction order.
 */
export function theory_demo(d: number, k: number): string;

/**
 * Trains an additive model of the given order on a synthetic regression
 * task and returns its learned shapes.
 */
export function train_demo(seed: bigint, order: number, epochs: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly fis_demo: (a: bigint, b: number, c: number, d: number) => [number, number, number, number];
    readonly theory_demo: (a: number, b: number) => [number, number, number, number];
    readonly train_demo: (a: bigint, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
