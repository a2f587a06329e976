// Dispatch flow: operator clicks a point, the server ranks the fleet by
// distance, the operator picks a vehicle, a mission is created, and an
// optional command goes out. The ranked list is rendered verbatim from
// the /api/nearest response; nothing is re-sorted client-side.

import type { ApiClient, CommandStatus, Mission, NearestResponse } from "./api";

export interface DispatchSelection {
  point: { lat: number; lon: number };
  nearest: NearestResponse;
  chosenImei: number | null;
  mission: Mission | null;
  command: CommandStatus | null;
}

export class DispatchFlow {
  selection: DispatchSelection | null = null;
  private listeners: (() => void)[] = [];

  constructor(private readonly api: ApiClient) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  async pickPoint(lat: number, lon: number, limit = 10): Promise<void> {
    const nearest = await this.api.nearest(lat, lon, limit);
    this.selection = {
      point: { lat, lon },
      nearest,
      chosenImei: null,
      mission: null,
      command: null,
    };
    this.notify();
  }

  chooseVehicle(imei: number): void {
    if (!this.selection) {
      throw new Error("no dispatch point selected");
    }
    if (!this.selection.nearest.ranked.some((r) => r.imei === imei)) {
      throw new Error(`vehicle ${imei} is not in the ranked list`);
    }
    this.selection.chosenImei = imei;
    this.notify();
  }

  async createMission(
    driver: string,
    purpose: string,
    startMs: number,
    endMs: number,
  ): Promise<Mission> {
    if (!this.selection || this.selection.chosenImei === null) {
      throw new Error("choose a vehicle first");
    }
    const mission = await this.api.createMission(
      this.selection.chosenImei,
      driver,
      purpose,
      startMs,
      endMs,
    );
    this.selection.mission = mission;
    this.notify();
    return mission;
  }

  async sendCommand(command: string): Promise<CommandStatus> {
    if (!this.selection || this.selection.chosenImei === null) {
      throw new Error("choose a vehicle first");
    }
    // optimistic: show queued immediately, reconcile on the response and
    // any later command events from the stream
    const optimistic: CommandStatus = {
      id: -1,
      imei: this.selection.chosenImei,
      text: command,
      status: "queued",
      reply: null,
      history: [],
    };
    this.selection.command = optimistic;
    this.notify();
    const status = await this.api.sendCommand(
      this.selection.chosenImei,
      command,
    );
    this.selection.command = status;
    this.notify();
    return status;
  }

  applyCommandEvent(event: {
    id?: number;
    status?: string;
    reply?: string | null;
  }): void {
    const current = this.selection?.command;
    if (!current || event.id === undefined || event.id !== current.id) {
      return;
    }
    current.status = event.status ?? current.status;
    current.reply = event.reply ?? current.reply;
    this.notify();
  }
}
