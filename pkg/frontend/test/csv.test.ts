import { describe, expect, it } from 'vitest'

import { CsvError, column, parseCsv } from '../src/csv.js'

describe('parseCsv', () => {
  it('parses a simple numeric table', () => {
    const t = parseCsv('a,b\n1,2\n3,4\n')
    expect(t.header).toEqual(['a', 'b'])
    expect(t.rows).toEqual([
      ['1', '2'],
      ['3', '4'],
    ])
  })

  it('rejects an empty file', () => {
    expect(() => parseCsv('')).toThrow(CsvError)
    expect(() => parseCsv('\n\n')).toThrow(/empty/)
  })

  it('rejects a header-only file', () => {
    expect(() => parseCsv('a,b\n')).toThrow(/no data rows/)
  })

  it('rejects ragged rows', () => {
    expect(() => parseCsv('a,b\n1,2\n3\n')).toThrow(/row 2/)
  })
})

describe('column', () => {
  it('extracts numbers', () => {
    const t = parseCsv('x,y\n0.5,1\n-2e-3,2\n')
    expect(column(t, 'x')).toEqual([0.5, -2e-3])
  })

  it('names the missing column', () => {
    const t = parseCsv('x\n1\n')
    expect(() => column(t, 'z')).toThrow(/column z not present/)
  })

  it('rejects non-numeric cells', () => {
    const t = parseCsv('x\nhello\n')
    expect(() => column(t, 'x')).toThrow(/not a number/)
  })

  it('admits declared nan cells', () => {
    const t = parseCsv('gap\nnan\n0.5\n')
    const vals = column(t, 'gap', true)
    expect(vals[0]).toBeNaN()
    expect(vals[1]).toBe(0.5)
  })
})
