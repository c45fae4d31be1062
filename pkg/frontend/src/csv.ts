/** Minimal CSV reader for the laboratory's report files.
 *
 * The reports are plain comma-separated numeric tables with a single header
 * row and no quoting, so no general-purpose CSV machinery is needed.
 */

export interface Table {
  header: string[]
  rows: string[][]
}

export class CsvError extends Error {}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter(line => line.trim().length > 0)
  if (lines.length === 0) {
    throw new CsvError('CSV is empty: no header row')
  }
  const header = lines[0].split(',').map(c => c.trim())
  if (lines.length === 1) {
    throw new CsvError('CSV has a header but no data rows')
  }
  const rows: string[][] = []
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(',').map(c => c.trim())
    if (cells.length !== header.length) {
      throw new CsvError(
        `row ${i}: expected ${header.length} cells, got ${cells.length}`,
      )
    }
    rows.push(cells)
  }
  return { header, rows }
}

/** Numeric column accessor; NaN cells are rejected except in named columns. */
export function column(table: Table, name: string, allowNan = false): number[] {
  const idx = table.header.indexOf(name)
  if (idx < 0) {
    throw new CsvError(`column ${name} not present in ${table.header.join(',')}`)
  }
  return table.rows.map((row, i) => {
    const v = Number(row[idx])
    if (Number.isNaN(v) && !allowNan && row[idx].toLowerCase() !== 'nan') {
      throw new CsvError(`column ${name}, row ${i}: not a number: ${row[idx]}`)
    }
    return v
  })
}

export function textColumn(table: Table, name: string): string[] {
  const idx = table.header.indexOf(name)
  if (idx < 0) {
    throw new CsvError(`column ${name} not present in ${table.header.join(',')}`)
  }
  return table.rows.map(row => row[idx])
}
