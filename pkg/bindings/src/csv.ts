/** Minimal CSV helpers for the core's delimited formats (no quoting needed:
 * ids and numbers never contain commas). */

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    return { header: [], rows: [] };
  }
  const [head, ...rest] = lines;
  return { header: head.split(","), rows: rest.map((l) => l.split(",")) };
}

export function renderCsv(header: string[], rows: (string | number)[][]): string {
  const body = rows.map((r) => r.map(cell).join(",")).join("\n");
  return header.join(",") + "\n" + (body.length ? body + "\n" : "");
}

/** JS shortest round-trip formatting keeps float64 inputs exact across the
 * text boundary. */
function cell(v: string | number): string {
  return typeof v === "number" ? String(v) : v;
}

export function columnIndex(table: Table, name: string): number {
  const i = table.header.indexOf(name);
  if (i < 0) {
    throw new Error(`CSV missing column '${name}' (has: ${table.header.join(", ")})`);
  }
  return i;
}

/** Extract float columns into one row-major Float64Array. */
export function numericColumns(table: Table, names: string[]): Float64Array {
  const idx = names.map((n) => columnIndex(table, n));
  const out = new Float64Array(table.rows.length * names.length);
  table.rows.forEach((row, r) => {
    idx.forEach((c, j) => {
      out[r * names.length + j] = Number(row[c]);
    });
  });
  return out;
}
