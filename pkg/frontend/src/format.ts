/** Display formatting only: the service computes every statistic. */

export function pct(value: number | null | undefined, digits = 1): string {
  if (value === null || value === undefined || Number.isNaN(value)) return "—";
  return `${(100 * value).toFixed(digits)}%`;
}

export function num(value: number | null | undefined, digits = 3): string {
  if (value === null || value === undefined || Number.isNaN(value)) return "—";
  return value.toFixed(digits);
}

export function stopReasonLabel(reason: string): string {
  const labels: Record<string, string> = {
    "none": "running",
    "sufficient-information": "stopped: sufficient information",
    "lowest-unsafe": "stopped: lowest dose unsafe",
    "highest-very-safe": "stopped: highest dose very safe",
    "precision": "stopped: MTD precise enough",
    "hard-safety": "stopped: hard safety",
    "max-patients": "stopped: maximum patients",
  };
  return labels[reason] ?? reason;
}
