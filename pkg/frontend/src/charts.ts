/** Chart layout math (pure, unit-tested) and thin canvas painters.
 *
 * Charts render exported data from the server; nothing here derives protocol
 * results. Image export is a client-side canvas snapshot.
 */

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
  value: number;
  index: number;
}

export interface BarLayout {
  bars: Rect[];
  maxValue: number;
  /** how many source values each bar aggregates (1 unless downsampled) */
  bucketSize: number;
  sumValues: number;
}

/** Lay out a bar chart; when there are more values than pixels, adjacent
 * values are summed into buckets so the total mass is preserved. */
export function computeBarLayout(
  values: number[],
  width: number,
  height: number,
  maxBars = 200,
): BarLayout {
  const sumValues = values.reduce((a, b) => a + b, 0);
  if (values.length === 0 || width <= 0 || height <= 0) {
    return { bars: [], maxValue: 0, bucketSize: 1, sumValues };
  }
  const bucketSize = Math.max(1, Math.ceil(values.length / maxBars));
  const grouped: number[] = [];
  for (let i = 0; i < values.length; i += bucketSize) {
    let acc = 0;
    for (let j = i; j < Math.min(i + bucketSize, values.length); j++) {
      acc += values[j];
    }
    grouped.push(acc);
  }
  const maxValue = Math.max(...grouped);
  const barWidth = width / grouped.length;
  const bars = grouped.map((value, index) => {
    const h = maxValue > 0 ? (value / maxValue) * (height - 2) : 0;
    return {
      x: index * barWidth,
      y: height - h,
      w: Math.max(barWidth - 1, 1),
      h,
      value,
      index,
    };
  });
  return { bars, maxValue, bucketSize, sumValues };
}

export interface LinePoint {
  x: number;
  y: number;
  value: number;
}

export interface LineLayout {
  points: LinePoint[];
  boundY: number | null;
  maxValue: number;
}

/** Scatter/line layout for per-trial hop counts with a horizontal bound. */
export function computeLineLayout(
  values: number[],
  bound: number | null,
  width: number,
  height: number,
): LineLayout {
  if (values.length === 0 || width <= 0 || height <= 0) {
    return { points: [], boundY: null, maxValue: 0 };
  }
  const top = Math.max(Math.max(...values), bound ?? 0, 1);
  const stepX = values.length > 1 ? width / (values.length - 1) : 0;
  const scaleY = (v: number) => height - (v / top) * (height - 2);
  const points = values.map((value, i) => ({
    x: values.length > 1 ? i * stepX : width / 2,
    y: scaleY(value),
    value,
  }));
  return {
    points,
    boundY: bound === null ? null : scaleY(bound),
    maxValue: Math.max(...values),
  };
}

/** Histogram pairs sorted by hop count, straight from the server document. */
export function histogramSeries(
  histogram: Record<string, number>,
): Array<[number, number]> {
  return Object.entries(histogram)
    .map(([hops, count]) => [Number(hops), count] as [number, number])
    .sort((a, b) => a[0] - b[0]);
}

// -- canvas painters ---------------------------------------------------------

export function drawBars(
  canvas: HTMLCanvasElement,
  layout: BarLayout,
  color = "#3a7bd5",
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = color;
  for (const bar of layout.bars) {
    ctx.fillRect(bar.x, bar.y, bar.w, bar.h);
  }
}

export function drawLine(
  canvas: HTMLCanvasElement,
  layout: LineLayout,
  color = "#2e9e5b",
  boundColor = "#c0392b",
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (layout.boundY !== null) {
    ctx.strokeStyle = boundColor;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(0, layout.boundY);
    ctx.lineTo(canvas.width, layout.boundY);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.strokeStyle = color;
  ctx.beginPath();
  layout.points.forEach((p, i) => {
    if (i === 0) ctx.moveTo(p.x, p.y);
    else ctx.lineTo(p.x, p.y);
  });
  ctx.stroke();
}

/** Client-side PNG snapshot of a rendered chart. */
export function downloadCanvasPng(canvas: HTMLCanvasElement, name: string): void {
  const link = document.createElement("a");
  link.download = name;
  link.href = canvas.toDataURL("image/png");
  link.click();
}
