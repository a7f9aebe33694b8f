/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Cells on the Pareto front of the whole grid.
     */
    front(): Uint32Array;
    /**
     * Hypervolume of the cells in `cells` against the origin.
     */
    hypervolume_of(cells: Uint32Array): number;
    /**
     * L1 distance between the sampler and its target at weight `w1`.
     */
    l1(w1: number): number;
    constructor(side: number, seed: bigint);
    /**
     * Objective values of every cell, interleaved `[f1, f2, f1, f2, ...]`.
     */
    objectives(): Float64Array;
    /**
     * Exact terminal distribution of the trained sampler at weight `w1`.
     */
    policy(w1: number): Float64Array;
    side(): number;
    steps(): number;
    /**
     * Exact distribution proportional to the shaped reward at weight `w1`
     * on the first objective. `exponent` sharpens the reward.
     */
    target(w1: number, exponent: number): Float64Array;
    /**
     * Runs training steps with preferences drawn uniformly from the simplex.
     * Returns the mean loss.
     */
    train(steps: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_front: (a: number) => [number, number, number, number];
    readonly demo_hypervolume_of: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_l1: (a: number, b: number) => [number, number, number];
    readonly demo_new: (a: number, b: bigint) => [number, number, number];
    readonly demo_objectives: (a: number) => [number, number, number, number];
    readonly demo_policy: (a: number, b: number) => [number, number, number, number];
    readonly demo_side: (a: number) => number;
    readonly demo_steps: (a: number) => number;
    readonly demo_target: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_train: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
