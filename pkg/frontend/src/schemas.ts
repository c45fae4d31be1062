/** Column schemas shared with the Python CLI's report writers.
 *
 * Each figure kind declares the columns its CSV must carry.  Kinds with a
 * variable state dimension (trajectories, value surfaces) declare a prefix
 * pattern for the trailing coordinate columns.
 */

import type { Table } from './csv.js'

export class SchemaError extends Error {}

export interface Schema {
  /** Exact leading columns, in order. */
  fixed: string[]
  /** Pattern for the remaining columns (e.g. x_1, x_2, ...). */
  rest?: RegExp
  /** Minimum number of rest-columns required. */
  minRest?: number
  /** Exact trailing column, checked after the rest-columns. */
  last?: string
}

export const SCHEMAS: Record<string, Schema> = {
  'lambda-trace': { fixed: ['alpha', 'lambda', 'gap'] },
  'tv-decay': { fixed: ['t', 'tv_estimate', 'se'] },
  'meeting-times': { fixed: ['k', 'count'] },
  'met-fraction': { fixed: ['k', 'met_fraction'] },
  'hitting-cdf': { fixed: ['T', 'hit_prob', 'ci_low', 'ci_high'] },
  'policy-costs': { fixed: ['policy_id', 'J', 'se', 'gap_vs_lambda'] },
  trajectories: { fixed: ['path', 't'], rest: /^x_\d+$/, minRest: 1 },
  value: { fixed: [], rest: /^x_\d+$/, minRest: 1, last: 'v' },
  'v-bar': { fixed: [], rest: /^x_\d+$/, minRest: 1, last: 'v' },
}

export function figureKinds(): string[] {
  return Object.keys(SCHEMAS)
}

/** Validates a table against a kind's schema; the error carries the column
 * diff (missing and unexpected columns) so a mismatched file is diagnosable
 * from the message alone. */
export function validateSchema(kind: string, table: Table): void {
  const schema = SCHEMAS[kind]
  if (!schema) {
    throw new SchemaError(
      `unknown figure kind ${kind}; known: ${figureKinds().join(', ')}`,
    )
  }
  const got = table.header
  const required = [...schema.fixed, ...(schema.last ? [schema.last] : [])]
  const missing = required.filter(c => !got.includes(c))
  const expected = new Set(required)
  const unexpected = got.filter(
    c => !expected.has(c) && !(schema.rest && schema.rest.test(c)),
  )
  const prefixWrong = schema.fixed.some((c, i) => got[i] !== c)
  const lastWrong = schema.last !== undefined && got[got.length - 1] !== schema.last
  const restCount =
    got.length - schema.fixed.length - (schema.last === undefined ? 0 : 1)
  const tooFewRest = schema.minRest !== undefined && schema.minRest > restCount
  if (missing.length || unexpected.length || prefixWrong || lastWrong || tooFewRest) {
    const parts = [`schema mismatch for kind ${kind}`]
    if (missing.length) parts.push(`missing columns: ${missing.join(', ')}`)
    if (unexpected.length) parts.push(`unexpected columns: ${unexpected.join(', ')}`)
    if (!missing.length && !unexpected.length && prefixWrong)
      parts.push(`column order must start with: ${schema.fixed.join(', ')}`)
    if (!missing.length && lastWrong)
      parts.push(`last column must be: ${schema.last}`)
    if (tooFewRest)
      parts.push(`expected at least ${schema.minRest} coordinate column(s)`)
    parts.push(`got: ${got.join(', ')}`)
    throw new SchemaError(parts.join('; '))
  }
}
