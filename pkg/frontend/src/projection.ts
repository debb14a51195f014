/**
 * Equirectangular panel mapping between pixels and (azimuth, elevation).
 *
 * The panel is a linear projection: horizontal position maps to azimuth in
 * (-PI, PI] (left edge wraps to PI), vertical position maps to elevation in
 * [-PI/2, PI/2] with up positive. The panel center is exactly (0, 0).
 */

export interface Angles {
  azimuth: number;
  elevation: number;
}

/** Wrap an angle into (-PI, PI]. */
export function wrapAzimuth(az: number): number {
  let a = az % (2 * Math.PI);
  if (a <= -Math.PI) a += 2 * Math.PI;
  if (a > Math.PI) a -= 2 * Math.PI;
  return a;
}

/**
 * Convert a click at pixel (x, y) on a width x height panel to angles.
 * Returns null for clicks outside the panel (callers ignore those).
 */
export function panelToAngles(
  x: number,
  y: number,
  width: number,
  height: number,
): Angles | null {
  if (width <= 0 || height <= 0) return null;
  if (x < 0 || x > width || y < 0 || y > height) return null;
  const azimuth = wrapAzimuth((x / width - 0.5) * 2 * Math.PI);
  const elevation = (0.5 - y / height) * Math.PI;
  return { azimuth, elevation };
}

/** Inverse map; azimuth PI lands on the left edge (pixel 0 equivalent). */
export function anglesToPanel(
  angles: Angles,
  width: number,
  height: number,
): { x: number; y: number } {
  const az = wrapAzimuth(angles.azimuth);
  const x = (az / (2 * Math.PI) + 0.5) * width;
  const y = (0.5 - angles.elevation / Math.PI) * height;
  return { x: x >= width ? x - width : x, y };
}

/** Angular size of one pixel, the round-trip tolerance. */
export function pixelQuantum(width: number, height: number): Angles {
  return { azimuth: (2 * Math.PI) / width, elevation: Math.PI / height };
}
