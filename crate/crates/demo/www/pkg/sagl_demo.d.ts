/* tslint:disable */
/* eslint-disable */

/**
 * `[L, I_1, .., I_kmax, log p(x)]` for a random small belief network.
 */
export function bound_chain(seed: number, k_max: number): Float64Array;

/**
 * `D_f(p0 || q_lambda)` on the two-mode target for `points` evenly spaced
 * values of the per-bit probability `lambda`.
 */
export function divergence_curve(kind: string, points: number): Float64Array;

/**
 * Trains a table generator on the two-mode target; rows of
 * `[step, KL(p0||p), KL(p||p0)]`, flattened.
 */
export function vdm_run(kind: string, steps: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bound_chain: (a: number, b: number) => [number, number, number, number];
    readonly divergence_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly vdm_run: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
