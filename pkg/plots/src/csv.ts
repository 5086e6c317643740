import { readFileSync } from "node:fs";

export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  rows: string[][];
  source: string;
}

export function parseCsv(text: string, source = "<string>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty CSV`);
  }
  const columns = lines[0].split(",");
  const rows = lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${source}: row ${i + 1} has ${cells.length} cells, header has ${columns.length}`,
      );
    }
    return cells;
  });
  return { columns, rows, source };
}

export function readCsv(path: string): Table {
  return parseCsv(readFileSync(path, "utf8"), path);
}

export function requireColumns(table: Table, expected: string[]): void {
  const missing = expected.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(
      `${table.source}: schema mismatch; expected columns [${expected.join(", ")}], ` +
        `found [${table.columns.join(", ")}]`,
    );
  }
}

export function numberColumn(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(
      `${table.source}: no column ${name}; found [${table.columns.join(", ")}]`,
    );
  }
  return table.rows.map((r, i) => {
    const v = Number(r[idx]);
    if (!Number.isFinite(v)) {
      throw new SchemaError(`${table.source}: row ${i + 1}, column ${name}: not a number`);
    }
    return v;
  });
}
