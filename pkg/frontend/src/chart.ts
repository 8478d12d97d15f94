/** SVG dose-toxicity curve: service-provided quantile band plus target line.
 *
 * Pure string renderer so contract tests can snapshot it; no statistics are
 * computed here - the 2.5/50/97.5% bands arrive ready-made from the service.
 */

import type { Summaries } from "./types.js";

const WIDTH = 560;
const HEIGHT = 300;
const PAD = 40;

function x(dose: number, doses: number[]): number {
  const lo = doses[0];
  const hi = doses[doses.length - 1];
  return PAD + ((dose - lo) / (hi - lo)) * (WIDTH - 2 * PAD);
}

function y(prob: number): number {
  return HEIGHT - PAD - prob * (HEIGHT - 2 * PAD);
}

function path(doses: number[], probs: number[]): string {
  return probs
    .map((p, i) => `${i === 0 ? "M" : "L"}${x(doses[i], doses).toFixed(1)},${y(p).toFixed(1)}`)
    .join(" ");
}

export function renderCurveSvg(
  doses: number[],
  summaries: Summaries,
  target: number,
): string {
  const lower = summaries.quantiles["0.025"];
  const median = summaries.quantiles["0.5"];
  const upper = summaries.quantiles["0.975"];
  const band =
    path(doses, upper) +
    " " +
    [...doses.keys()]
      .reverse()
      .map((i) => `L${x(doses[i], doses).toFixed(1)},${y(lower[i]).toFixed(1)}`)
      .join(" ") +
    " Z";
  const ticks = doses
    .map(
      (d) =>
        `<text class="tick" x="${x(d, doses).toFixed(1)}" y="${HEIGHT - PAD + 16}" text-anchor="middle">${d}</text>`,
    )
    .join("");
  const marks = [0, 0.25, 0.5, 0.75, 1.0]
    .map(
      (p) =>
        `<text class="tick" x="${PAD - 8}" y="${(y(p) + 4).toFixed(1)}" text-anchor="end">${p}</text>`,
    )
    .join("");
  return [
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img" aria-label="dose toxicity curve">`,
    `<rect x="${PAD}" y="${PAD}" width="${WIDTH - 2 * PAD}" height="${HEIGHT - 2 * PAD}" class="plot-bg"/>`,
    `<path class="band" d="${band}"/>`,
    `<path class="median" d="${path(doses, median)}"/>`,
    `<path class="mean" d="${path(doses, summaries.mean_tox)}"/>`,
    `<line class="target" x1="${PAD}" y1="${y(target).toFixed(1)}" x2="${WIDTH - PAD}" y2="${y(target).toFixed(1)}"/>`,
    ticks,
    marks,
    `</svg>`,
  ].join("");
}
