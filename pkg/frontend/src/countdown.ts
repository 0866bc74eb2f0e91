// Prompt countdowns on the local clock, anchored to server time.
//
// A prompt message carries its own server timestamp and a server-time
// deadline; the remaining window is (deadline - issuedAt) minus however
// much local time has passed since the message arrived. When the window
// lapses the console auto-submits the documented default (workload prompt:
// the previous score; approval prompt: reject). The server applies the
// same default at its own deadline, so a late client submission is
// harmless: the server ignores it and the outcome is unchanged.

export interface Countdown {
  deadlineLocal: number;
  totalMs: number;
}

export function startCountdown(
  deadlineServer: number,
  issuedAtServer: number,
  localNow: number,
): Countdown {
  const totalMs = Math.max(0, deadlineServer - issuedAtServer);
  return { deadlineLocal: localNow + totalMs, totalMs };
}

export function remainingMs(cd: Countdown, localNow: number): number {
  return Math.max(0, cd.deadlineLocal - localNow);
}

export function remainingSeconds(cd: Countdown, localNow: number): number {
  return Math.ceil(remainingMs(cd, localNow) / 1000);
}

export function expired(cd: Countdown, localNow: number): boolean {
  return remainingMs(cd, localNow) <= 0;
}

/** Fraction of the window still open, for the countdown bar. */
export function fractionLeft(cd: Countdown, localNow: number): number {
  if (cd.totalMs <= 0) return 0;
  return remainingMs(cd, localNow) / cd.totalMs;
}
