/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const earDemo: (a: number, b: number) => [number, number];
export const irisDemo: (a: number, b: number, c: number, d: number) => [number, number];
export const smoothingCurve: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
