/**
 * Client-side character error rate for prescribed-phrase mode.
 * Mirrors the service-side definition: unit-cost Levenshtein distance
 * over characters, divided by the reference length, times 100.
 */

export function levenshtein(a: string, b: string): number {
  const n = a.length;
  const m = b.length;
  if (n === 0) return m;
  if (m === 0) return n;
  let prev = new Array<number>(m + 1);
  let cur = new Array<number>(m + 1);
  for (let j = 0; j <= m; j++) prev[j] = j;
  for (let i = 1; i <= n; i++) {
    cur[0] = i;
    for (let j = 1; j <= m; j++) {
      const sub = prev[j - 1] + (a[i - 1] === b[j - 1] ? 0 : 1);
      cur[j] = Math.min(sub, prev[j] + 1, cur[j - 1] + 1);
    }
    [prev, cur] = [cur, prev];
  }
  return prev[m];
}

export function cerPercent(hyp: string, ref: string): number {
  if (ref.length === 0) throw new Error("CER undefined for empty reference");
  return (100 * levenshtein(hyp, ref)) / ref.length;
}
