/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_front: (a: number) => [number, number, number, number];
export const demo_hypervolume_of: (a: number, b: number, c: number) => [number, number, number];
export const demo_l1: (a: number, b: number) => [number, number, number];
export const demo_new: (a: number, b: bigint) => [number, number, number];
export const demo_objectives: (a: number) => [number, number, number, number];
export const demo_policy: (a: number, b: number) => [number, number, number, number];
export const demo_side: (a: number) => number;
export const demo_steps: (a: number) => number;
export const demo_target: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_train: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
