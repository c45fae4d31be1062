#!/usr/bin/env node
/** Batch figure renderer:
 *
 *   ebsdelab-figures <kind> <input.csv> <output.svg> [--title "..."]
 *
 * Kinds and their column schemas are shared with the report writers; a
 * mismatched file aborts with the column diff and exit code 2.
 */

import { readFileSync, writeFileSync } from 'fs'
import { basename } from 'path'

import { CsvError, parseCsv } from './csv.js'
import { render } from './figures.js'
import { SchemaError, figureKinds } from './schemas.js'

function usage(): string {
  return (
    'usage: ebsdelab-figures <kind> <input.csv> <output.svg> [--title TITLE]\n' +
    `kinds: ${figureKinds().join(', ')}`
  )
}

export function main(argv: string[]): number {
  const args = [...argv]
  let title: string | undefined
  const ti = args.indexOf('--title')
  if (ti >= 0) {
    title = args[ti + 1]
    if (title === undefined) {
      console.error('--title needs a value\n' + usage())
      return 2
    }
    args.splice(ti, 2)
  }
  if (args.length !== 3) {
    console.error(usage())
    return 2
  }
  const [kind, input, output] = args
  let text: string
  try {
    text = readFileSync(input, 'utf8')
  } catch (err) {
    console.error(`cannot read ${input}: ${(err as Error).message}`)
    return 2
  }
  try {
    const table = parseCsv(text)
    const svg = render(kind, table, title ?? basename(input))
    writeFileSync(output, svg)
  } catch (err) {
    if (err instanceof CsvError || err instanceof SchemaError) {
      console.error(`${input}: ${err.message}`)
      return 2
    }
    console.error(`${input}: ${(err as Error).message}`)
    return 1
  }
  console.log(`wrote ${output}`)
  return 0
}

import { pathToFileURL } from 'url'

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)))
}
